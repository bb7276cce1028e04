//! Orthogonal elementary stochastic measures on finite atom algebras.
//!
//! A measure stores one random element per atom and is extended to every set
//! of the algebra by summation, so finite additivity holds by construction and
//! orthogonality on disjoint sets is the property that carries content. The
//! structural measure `m(A) = E|M(A)|^2` is likewise stored per atom; on a
//! finite algebra its additive extension is the unique extension to the
//! generated sigma-algebra.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::{GaussianFamily, MeasureFamily};
use crate::probability::{Mode, RandomElement, ScenarioModel};
use crate::scalar::{czero, Real};
use crate::set_system::{AlgebraSet, AtomAlgebra, Atoms};

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalStochasticMeasure<T> {
    algebra: AtomAlgebra<T>,
    model: ScenarioModel<T>,
    atom_values: Vec<RandomElement<T>>,
}

impl<T: Real> OrthogonalStochasticMeasure<T> {
    /// Wraps per-atom values. Orthogonality is not checked here; see [`validate_axioms`].
    pub fn new(algebra: AtomAlgebra<T>, model: ScenarioModel<T>, atom_values: Vec<RandomElement<T>>) -> Result<Self> {
        if atom_values.len() != algebra.atom_count() {
            return Err(Error::Dimension { expected: algebra.atom_count(), found: atom_values.len() });
        }
        if let Some(bad) = atom_values.iter().find(|v| v.len() != model.len()) {
            return Err(Error::Dimension { expected: model.len(), found: bad.len() });
        }
        Ok(Self { algebra, model, atom_values })
    }

    pub fn zero(algebra: AtomAlgebra<T>, model: ScenarioModel<T>) -> Self {
        let atom_values = vec![RandomElement::zeros(model.len()); algebra.atom_count()];
        Self { algebra, model, atom_values }
    }

    pub fn algebra(&self) -> &AtomAlgebra<T> {
        &self.algebra
    }

    pub fn model(&self) -> &ScenarioModel<T> {
        &self.model
    }

    pub fn atom_values(&self) -> &[RandomElement<T>] {
        &self.atom_values
    }

    pub fn atom_value(&self, atom: usize) -> &RandomElement<T> {
        &self.atom_values[atom]
    }

    /// `M(set)`: the sum of the set's atom values.
    pub fn evaluate(&self, set: &AlgebraSet) -> Result<RandomElement<T>> {
        self.algebra.check_owns(set)?;
        let mut out = vec![czero::<T>(); self.model.len()];
        for atom in set.atoms() {
            for (o, v) in out.iter_mut().zip(self.atom_values[atom].values()) {
                *o += v;
            }
        }
        Ok(RandomElement::new(out))
    }

    /// Per-atom `E|M(atom)|^2`.
    pub fn structural_measure(&self) -> StructuralMeasure<T> {
        let atom_masses = self
            .atom_values
            .par_iter()
            .map(|v| self.model.second_moment(v).expect("measure dimensions checked at construction"))
            .collect();
        StructuralMeasure { algebra: self.algebra.clone(), atom_masses }
    }

    /// `|E|M(B)|^2 - m(B)|` where `m(B)` sums the atom masses. Zero up to
    /// rounding exactly when the atoms of `B` are mutually orthogonal.
    pub fn structural_consistency_gap(&self, structural: &StructuralMeasure<T>, set: &AlgebraSet) -> Result<T> {
        let direct = self.model.second_moment(&self.evaluate(set)?)?;
        Ok((direct - structural.mass(set)?).abs())
    }

    /// `|E|M(A ∩ A')|^2 - E M(A) conj(M(A'))|`.
    pub fn partition_identity_gap(&self, a: &AlgebraSet, b: &AlgebraSet) -> Result<T> {
        let lhs = self.model.second_moment(&self.evaluate(&a.intersect(b)?)?)?;
        let rhs = self.model.inner_product(&self.evaluate(a)?, &self.evaluate(b)?)?;
        Ok((rhs - Complex::new(lhs, T::zero())).norm())
    }
}

/// Nonnegative masses on the atoms of an algebra, extended additively.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralMeasure<T> {
    algebra: AtomAlgebra<T>,
    atom_masses: Vec<T>,
}

impl<T: Real> StructuralMeasure<T> {
    pub fn new(algebra: AtomAlgebra<T>, atom_masses: Vec<T>) -> Result<Self> {
        if atom_masses.len() != algebra.atom_count() {
            return Err(Error::Dimension { expected: algebra.atom_count(), found: atom_masses.len() });
        }
        if let Some((j, m)) = atom_masses.iter().enumerate().find(|(_, m)| !(**m >= T::zero()) || !m.is_finite()) {
            return Err(Error::Construction(format!("atom {j} has mass {m}, expected a finite value >= 0")));
        }
        Ok(Self { algebra, atom_masses })
    }

    pub fn algebra(&self) -> &AtomAlgebra<T> {
        &self.algebra
    }

    pub fn atom_masses(&self) -> &[T] {
        &self.atom_masses
    }

    pub fn mass(&self, set: &AlgebraSet) -> Result<T> {
        self.algebra.check_owns(set)?;
        Ok(set.atoms().map(|j| self.atom_masses[j]).sum())
    }

    pub fn total(&self) -> T {
        self.atom_masses.iter().copied().sum()
    }
}

/// Indicator measure `M(A) = 1_A` on a scenario-indexed algebra; its
/// structural measure is the scenario probability itself.
pub fn indicator_measure<T: Real>(
    model: &ScenarioModel<T>,
    algebra: &AtomAlgebra<T>,
) -> Result<OrthogonalStochasticMeasure<T>> {
    let Atoms::Cells { ground_size, cells } = algebra.atoms() else {
        return Err(Error::Unsupported("indicator measure needs an algebra over scenario indices".into()));
    };
    if *ground_size != model.len() {
        return Err(Error::Dimension { expected: model.len(), found: *ground_size });
    }
    let atom_values =
        cells.iter().map(|cell| RandomElement::indicator(model.len(), cell)).collect::<Result<Vec<_>>>()?;
    OrthogonalStochasticMeasure::new(algebra.clone(), model.clone(), atom_values)
}

/// Independent circular complex Gaussian atoms with `E|M(atom)|^2 = control`.
///
/// Scenario `k` draws from its own substream of `seed`, so the result does
/// not depend on how scenarios are scheduled across threads.
pub fn gaussian_measure<T: Real>(
    algebra: &AtomAlgebra<T>,
    control: &StructuralMeasure<T>,
    scenarios: usize,
    seed: u64,
) -> Result<OrthogonalStochasticMeasure<T>> {
    GaussianFamily::new(algebra.clone(), control, scenarios, seed)?.measure_at(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxiomTolerance<T> {
    /// Zero in exact mode; `5 K^{-1/2} sqrt(m_i m_j)` for atom pair `(i, j)` in ensemble mode.
    ModeDefault,
    Absolute(T),
    /// `c K^{-1/2} sqrt(m_i m_j)` in either mode.
    Scaled(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityViolation<T> {
    pub atoms: (usize, usize),
    pub residual: T,
    pub tolerance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport<T> {
    /// Largest modulus of `M(∅)` over scenarios.
    pub empty_set_residual: T,
    pub pairs_checked: usize,
    pub max_orthogonality_residual: T,
    /// Largest `residual / tolerance` over atom pairs (infinite when a nonzero
    /// residual meets a zero tolerance).
    pub worst_ratio: T,
    pub orthogonality_violations: Vec<OrthogonalityViolation<T>>,
    /// `E|M(S) - sum_{j <= n} M(atom_j)|^2` after exhausting the atoms in order.
    /// Vanishes because the measure is stored per atom and summed.
    pub exhaustion_gap: T,
}

impl<T: Real> AxiomReport<T> {
    pub fn passed(&self) -> bool {
        self.empty_set_residual == T::zero()
            && self.orthogonality_violations.is_empty()
            && self.exhaustion_gap == T::zero()
    }
}

/// Checks `M(∅) = 0`, orthogonality over every pair of distinct atoms, and
/// the L² gap left by exhausting the ground set atom by atom.
pub fn validate_axioms<T: Real>(
    measure: &OrthogonalStochasticMeasure<T>,
    tolerance: AxiomTolerance<T>,
) -> AxiomReport<T> {
    let model = measure.model();
    let algebra = measure.algebra();
    let n = algebra.atom_count();

    let empty = measure.evaluate(&algebra.empty_set()).expect("own algebra");
    let empty_set_residual = empty.values().iter().fold(T::zero(), |m, v| m.max(v.norm()));

    let masses = measure.structural_measure();
    let clt = |c: T, i: usize, j: usize| {
        c / T::from_count(model.len()).sqrt() * (masses.atom_masses()[i] * masses.atom_masses()[j]).sqrt()
    };
    let pair_tolerance = |i: usize, j: usize| match (tolerance, model.mode()) {
        (AxiomTolerance::Absolute(t), _) => t,
        (AxiomTolerance::Scaled(c), _) => clt(c, i, j),
        (AxiomTolerance::ModeDefault, Mode::Exact) => T::zero(),
        (AxiomTolerance::ModeDefault, Mode::Ensemble) => clt(T::lit(5.0), i, j),
    };

    let per_row: Vec<(T, T, Vec<OrthogonalityViolation<T>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut worst = T::zero();
            let mut ratio = T::zero();
            let mut violations = Vec::new();
            for j in i + 1..n {
                let residual = model
                    .inner_product(measure.atom_value(i), measure.atom_value(j))
                    .expect("measure dimensions checked at construction")
                    .norm();
                let tol = pair_tolerance(i, j);
                worst = worst.max(residual);
                if residual > T::zero() {
                    ratio = ratio.max(if tol > T::zero() { residual / tol } else { T::infinity() });
                }
                if residual > tol {
                    violations.push(OrthogonalityViolation { atoms: (i, j), residual, tolerance: tol });
                }
            }
            (worst, ratio, violations)
        })
        .collect();

    let mut max_orthogonality_residual = T::zero();
    let mut worst_ratio = T::zero();
    let mut orthogonality_violations = Vec::new();
    for (worst, ratio, v) in per_row {
        max_orthogonality_residual = max_orthogonality_residual.max(worst);
        worst_ratio = worst_ratio.max(ratio);
        orthogonality_violations.extend(v);
    }

    let whole = measure.evaluate(&algebra.full_set()).expect("own algebra");
    let mut partial = RandomElement::zeros(model.len());
    for v in measure.atom_values() {
        partial.add_scaled(Complex::new(T::one(), T::zero()), v).expect("same length");
    }
    let exhaustion_gap = model.second_moment(&whole.try_sub(&partial).expect("same length")).expect("same length");

    AxiomReport {
        empty_set_residual,
        pairs_checked: n * n.saturating_sub(1) / 2,
        max_orthogonality_residual,
        worst_ratio,
        orthogonality_violations,
        exhaustion_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn uniform3() -> (ScenarioModel<f64>, AtomAlgebra<f64>) {
        (ScenarioModel::uniform(3).unwrap(), AtomAlgebra::discrete(3).unwrap())
    }

    #[test]
    fn evaluate_basics() {
        let (model, algebra) = uniform3();
        let m = indicator_measure(&model, &algebra).unwrap();
        assert_eq!(m.evaluate(&algebra.empty_set()).unwrap(), RandomElement::zeros(3));
        assert_eq!(m.evaluate(&algebra.atom_set(0).unwrap()).unwrap(), RandomElement::from_real(&[1.0, 0.0, 0.0]));
        let a1 = algebra.atom_set(0).unwrap();
        let a2 = algebra.atom_set(2).unwrap();
        let joint = m.evaluate(&a1.union(&a2).unwrap()).unwrap();
        let split = m.evaluate(&a1).unwrap().try_add(&m.evaluate(&a2).unwrap()).unwrap();
        assert_eq!(joint, split);
    }

    #[test]
    fn indicator_structural_masses_are_probabilities() {
        let (model, algebra) = uniform3();
        let m = indicator_measure(&model, &algebra).unwrap();
        let s = m.structural_measure();
        assert_eq!(s.atom_masses()[0], 1.0 / 3.0);
        let pair = algebra.set_of([0, 1]).unwrap();
        // E|1_{0,1}|^2 = P({0,1}) computed by direct summation
        let direct: f64 = [1.0, 1.0, 0.0].iter().map(|x: &f64| x * x / 3.0).sum();
        assert!((s.mass(&pair).unwrap() - direct).abs() < 1e-15);
        let ip = model
            .inner_product(&m.evaluate(&algebra.atom_set(0).unwrap()).unwrap(), &m.evaluate(&algebra.atom_set(1).unwrap()).unwrap())
            .unwrap();
        assert_eq!(ip, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn indicator_measure_needs_scenario_ground_set() {
        let model = ScenarioModel::<f64>::uniform(4).unwrap();
        assert!(matches!(indicator_measure(&model, &AtomAlgebra::discrete(3).unwrap()), Err(Error::Dimension { .. })));
        assert!(indicator_measure(&model, &AtomAlgebra::dyadic(2).unwrap()).is_err());
    }

    #[test]
    fn zero_measure_has_zero_masses() {
        let (model, algebra) = uniform3();
        let z = OrthogonalStochasticMeasure::zero(algebra, model);
        assert!(z.structural_measure().atom_masses().iter().all(|m| *m == 0.0));
        assert!(validate_axioms(&z, AxiomTolerance::ModeDefault).passed());
    }

    #[test]
    fn indicator_measure_passes_at_zero_tolerance() {
        let model = ScenarioModel::exact(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let algebra = AtomAlgebra::from_cells(4, vec![vec![0, 3], vec![1], vec![2]]).unwrap();
        let report = validate_axioms(&indicator_measure(&model, &algebra).unwrap(), AxiomTolerance::Absolute(0.0));
        assert!(report.passed());
        assert_eq!(report.pairs_checked, 3);
        assert_eq!(report.max_orthogonality_residual, 0.0);
    }

    #[test]
    fn correlated_atoms_are_reported() {
        let model = ScenarioModel::<f64>::uniform(3).unwrap();
        let algebra = AtomAlgebra::discrete(2).unwrap();
        let s = 0.5f64.sqrt();
        let m = OrthogonalStochasticMeasure::new(
            algebra,
            model.clone(),
            vec![RandomElement::from_real(&[s, s, 0.0]), RandomElement::from_real(&[1.0, 0.0, 0.0])],
        )
        .unwrap();
        let report = validate_axioms(&m, AxiomTolerance::ModeDefault);
        assert!(!report.passed());
        assert_eq!(report.orthogonality_violations.len(), 1);
        // E[M1 conj M2] = (1/3) * sqrt(1/2)
        let expected = s / 3.0;
        assert!((report.orthogonality_violations[0].residual - expected).abs() < 1e-15);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let (model, algebra) = uniform3();
        assert!(OrthogonalStochasticMeasure::new(algebra.clone(), model.clone(), vec![RandomElement::zeros(3)]).is_err());
        assert!(OrthogonalStochasticMeasure::new(algebra, model, vec![RandomElement::zeros(2); 3]).is_err());
    }

    #[test]
    fn evaluate_rejects_foreign_sets() {
        let (model, algebra) = uniform3();
        let m = indicator_measure(&model, &algebra).unwrap();
        let other = AtomAlgebra::<f64>::from_cells(3, vec![vec![0, 1], vec![2]]).unwrap();
        assert_eq!(m.evaluate(&other.full_set()), Err(Error::AlgebraMismatch));
    }

    #[test]
    fn structural_masses_reject_negative_values() {
        let algebra = AtomAlgebra::<f64>::discrete(2).unwrap();
        assert!(StructuralMeasure::new(algebra.clone(), vec![0.5, -0.1]).is_err());
        assert!(StructuralMeasure::new(algebra, vec![0.5]).is_err());
    }

    #[test]
    fn gaussian_control_zero_atom_is_zero() {
        let algebra = AtomAlgebra::<f64>::dyadic(1).unwrap();
        let control = StructuralMeasure::new(algebra.clone(), vec![0.0, 1.0]).unwrap();
        let m = gaussian_measure(&algebra, &control, 64, 3).unwrap();
        assert!(m.atom_value(0).values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        assert!(m.atom_value(1).values().iter().any(|v| v.norm() > 0.0));
        assert!(matches!(gaussian_measure(&algebra, &control, 1, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn gaussian_is_reproducible() {
        let algebra = AtomAlgebra::<f64>::dyadic(2).unwrap();
        let control = StructuralMeasure::new(algebra.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = gaussian_measure(&algebra, &control, 500, 77).unwrap();
        let b = gaussian_measure(&algebra, &control, 500, 77).unwrap();
        let c = gaussian_measure(&algebra, &control, 500, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
