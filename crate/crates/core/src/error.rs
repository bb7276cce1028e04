use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid construction: {0}")]
    Construction(String),

    #[error("objects belong to different atom algebras")]
    AlgebraMismatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("tail not summable within {terms} terms (partial mass {partial})")]
    Divergence { terms: usize, partial: f64 },

    #[error("no Cauchy convergence by level {max_level}: last gap {last_gap} >= target {target}")]
    NonConvergence {
        max_level: u32,
        last_gap: f64,
        target: f64,
        gaps: Vec<f64>,
    },

    #[error("lag {lag} not resolved at level {level}: need 2^level >= 8*|lag|")]
    Resolution { lag: i64, level: u32 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
