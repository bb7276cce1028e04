use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use orthomeasure::harness::{emit_report, run_scenario, Format, ScenarioConfig};
use orthomeasure::probability::Mode;

#[derive(Parser)]
#[command(name = "orthomeasure", version, about = "Reproducible verification runs for orthogonal stochastic measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the check suite described by a JSON scenario config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Ensemble,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

const USAGE_ERROR: u8 = 2;

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("ORTHOMEASURE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("ORTHOMEASURE_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE_ERROR } else { 0 });
        }
    };
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(USAGE_ERROR);
    }

    let Command::Run { config, seed, mode, format, out } = cli.command;
    let mut scenario = match ScenarioConfig::from_path(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(mode) = mode {
        scenario.mode = match mode {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Ensemble => Mode::Ensemble,
        };
    }
    if let Some(format) = format {
        scenario.format = match format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        };
    }
    if out.is_some() {
        scenario.output = out;
    }

    let report = run_scenario(&scenario);
    let bytes = match emit_report(&report, scenario.format) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: serializing report: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    let written = match &scenario.output {
        Some(path) => std::fs::write(path, &bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: writing report: {e}");
        return ExitCode::from(USAGE_ERROR);
    }
    for r in report.records.iter().filter(|r| !r.passed) {
        eprintln!("FAIL {}: gap {} > tolerance {}", r.name, r.gap, r.tolerance);
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
