//! Refinement-consistent families of orthogonal measures.
//!
//! L² integration of a general integrand evaluates the same underlying
//! measure on successively finer dyadic refinements of a base algebra. A
//! [`MeasureFamily`] supplies the measure at each refinement level, together
//! with the deterministic structural measure used for Cauchy tests. Members
//! at different levels are consistent: a coarse atom's value is the sum of its
//! children's values.

use std::ops::Range;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{OrthogonalStochasticMeasure, StructuralMeasure};
use crate::probability::{RandomElement, ScenarioModel};
use crate::scalar::{czero, Real};
use crate::set_system::{refine, AtomAlgebra};

pub trait MeasureFamily<T: Real>: Sync {
    fn base_algebra(&self) -> &AtomAlgebra<T>;

    /// Finest refinement level available; level `l` splits every base atom into `2^l` pieces.
    fn max_level(&self) -> u32;

    /// Reference structural measure at `level`.
    fn structural_at(&self, level: u32) -> Result<StructuralMeasure<T>>;

    fn measure_at(&self, level: u32) -> Result<OrthogonalStochasticMeasure<T>>;

    fn algebra_at(&self, level: u32) -> Result<AtomAlgebra<T>> {
        check_level(level, self.max_level())?;
        Ok(refine(self.base_algebra(), 1 << level)?.0)
    }
}

fn check_level(level: u32, max: u32) -> Result<()> {
    if level > max {
        return Err(Error::Argument(format!("level {level} exceeds family depth {max}")));
    }
    Ok(())
}

/// Base masses split evenly over `2^level` children per atom.
fn split_masses<T: Real>(base: &[T], level: u32) -> Vec<T> {
    let factor = 1usize << level;
    let share = T::from_count(factor);
    base.iter().flat_map(|m| std::iter::repeat_n(*m / share, factor)).collect()
}

/// Independent circular complex Gaussian increments, sampled at the finest
/// level and aggregated upwards.
///
/// Fine atom `j` of scenario `k` is `sqrt(m_j / 2) (xi + i eta)` with
/// `xi, eta` standard normal, drawn in atom order from ChaCha8 stream `k` of
/// the master seed.
#[derive(Debug, Clone)]
pub struct GaussianFamily<T> {
    base: AtomAlgebra<T>,
    control: Vec<T>,
    scenarios: usize,
    seed: u64,
    depth: u32,
    hermitian: bool,
}

impl<T: Real> GaussianFamily<T> {
    pub fn new(base: AtomAlgebra<T>, control: &StructuralMeasure<T>, scenarios: usize, seed: u64) -> Result<Self> {
        if scenarios < 2 {
            return Err(Error::Argument(format!("ensemble size must be at least 2, got {scenarios}")));
        }
        if *control.algebra() != base {
            return Err(Error::AlgebraMismatch);
        }
        Ok(Self { base, control: control.atom_masses().to_vec(), scenarios, seed, depth: 0, hermitian: false })
    }

    /// Samples at `depth` levels below the base algebra.
    pub fn with_depth(mut self, depth: u32) -> Result<Self> {
        if depth > 0 && self.base.intervals().is_none() {
            return Err(Error::Unsupported("refining a Gaussian measure over a non-interval algebra".into()));
        }
        if depth > 20 {
            return Err(Error::Argument(format!("depth {depth} too fine")));
        }
        self.depth = depth;
        if self.hermitian {
            self.check_mirror_symmetry()?;
        }
        Ok(self)
    }

    /// Mirror-image fine atoms (midpoints `λ` and `-λ`) receive conjugate
    /// draws, so integrals of `λ ↦ e^{iλn}` come out real.
    pub fn hermitian(mut self) -> Result<Self> {
        self.hermitian = true;
        self.check_mirror_symmetry()?;
        Ok(self)
    }

    fn check_mirror_symmetry(&self) -> Result<()> {
        let algebra = self.algebra_at(self.depth)?;
        let mids = algebra
            .midpoints()
            .ok_or_else(|| Error::Unsupported("Hermitian increments need interval atoms".into()))?;
        let masses = split_masses(&self.control, self.depth);
        let n = mids.len();
        let tol = T::lit(1e-9);
        for j in 0..n {
            let k = n - 1 - j;
            if (mids[j] + mids[k]).abs() > tol {
                return Err(Error::Argument(format!("atoms {j} and {k} are not mirror images about 0")));
            }
            if (masses[j] - masses[k]).abs() > tol * masses[j].max(masses[k]).max(T::min_positive_value()) {
                return Err(Error::Argument(format!("control masses of mirror atoms {j} and {k} differ")));
            }
        }
        Ok(())
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Finest-level increments of one scenario.
    pub fn sample_row(&self, scenario: usize) -> Vec<Complex<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(scenario as u64);
        let masses = split_masses(&self.control, self.depth);
        let n = masses.len();
        let half = T::lit(0.5);
        let mut row = vec![czero::<T>(); n];
        for j in 0..n {
            let mirror = if self.hermitian { n - 1 - j } else { n };
            if mirror < j {
                row[j] = row[mirror].conj();
                continue;
            }
            let xi: f64 = rng.sample(StandardNormal);
            if mirror == j {
                row[j] = Complex::new(masses[j].sqrt() * T::lit(xi), T::zero());
                continue;
            }
            let eta: f64 = rng.sample(StandardNormal);
            row[j] = Complex::new(T::lit(xi), T::lit(eta)).scale((masses[j] * half).sqrt());
        }
        row
    }

    /// Increments of one scenario on the atoms of `level`.
    pub fn row_at(&self, scenario: usize, level: u32) -> Result<Vec<Complex<T>>> {
        check_level(level, self.depth)?;
        let fine = self.sample_row(scenario);
        let group = 1usize << (self.depth - level);
        Ok(fine.chunks(group).map(|c| c.iter().fold(czero(), |acc, v| acc + v)).collect())
    }

    /// The measure at `level`, restricted to a sub-range of scenarios. The
    /// restriction is a uniform ensemble over those scenarios.
    pub fn measure_for_scenarios(&self, level: u32, scenarios: Range<usize>) -> Result<OrthogonalStochasticMeasure<T>> {
        if scenarios.end > self.scenarios || scenarios.is_empty() {
            return Err(Error::Argument(format!("scenario range {scenarios:?} outside 0..{}", self.scenarios)));
        }
        let algebra = self.algebra_at(level)?;
        let rows: Vec<Vec<Complex<T>>> =
            scenarios.clone().into_par_iter().map(|k| self.row_at(k, level)).collect::<Result<_>>()?;
        let atom_values = (0..algebra.atom_count())
            .map(|j| RandomElement::new(rows.iter().map(|r| r[j]).collect()))
            .collect();
        let model = ScenarioModel::ensemble(scenarios.len(), self.seed)?;
        OrthogonalStochasticMeasure::new(algebra, model, atom_values)
    }
}

impl<T: Real> MeasureFamily<T> for GaussianFamily<T> {
    fn base_algebra(&self) -> &AtomAlgebra<T> {
        &self.base
    }

    fn max_level(&self) -> u32 {
        self.depth
    }

    fn structural_at(&self, level: u32) -> Result<StructuralMeasure<T>> {
        StructuralMeasure::new(self.algebra_at(level)?, split_masses(&self.control, level))
    }

    fn measure_at(&self, level: u32) -> Result<OrthogonalStochasticMeasure<T>> {
        self.measure_for_scenarios(level, 0..self.scenarios)
    }

    fn algebra_at(&self, level: u32) -> Result<AtomAlgebra<T>> {
        check_level(level, self.depth)?;
        if level == 0 {
            return Ok(self.base.clone());
        }
        Ok(refine(&self.base, 1 << level)?.0)
    }
}

/// Exact indicator measure on an interval algebra.
///
/// The scenarios are the finest atoms, weighted by their share of the
/// control mass `c`, and `M(A) = sqrt(c) 1_A`. Then `E|M(A)|^2` equals the
/// control mass of `A` and disjoint sets are exactly orthogonal.
#[derive(Debug, Clone)]
pub struct IndicatorFamily<T> {
    base: AtomAlgebra<T>,
    control: Vec<T>,
    depth: u32,
    model: ScenarioModel<T>,
}

impl<T: Real> IndicatorFamily<T> {
    pub fn new(base: AtomAlgebra<T>, control: &StructuralMeasure<T>, depth: u32) -> Result<Self> {
        if *control.algebra() != base {
            return Err(Error::AlgebraMismatch);
        }
        if depth > 0 && base.intervals().is_none() {
            return Err(Error::Unsupported("refining an indicator family over a non-interval algebra".into()));
        }
        if depth > 14 {
            return Err(Error::Argument(format!("depth {depth} too fine for a dense exact family")));
        }
        let total = control.total();
        if !(total > T::zero()) {
            return Err(Error::Argument("indicator family needs positive total control mass".into()));
        }
        let fine = split_masses(control.atom_masses(), depth);
        let model = ScenarioModel::exact(fine.iter().map(|m| *m / total).collect())?;
        Ok(Self { base, control: control.atom_masses().to_vec(), depth, model })
    }

    pub fn model(&self) -> &ScenarioModel<T> {
        &self.model
    }
}

impl<T: Real> MeasureFamily<T> for IndicatorFamily<T> {
    fn base_algebra(&self) -> &AtomAlgebra<T> {
        &self.base
    }

    fn max_level(&self) -> u32 {
        self.depth
    }

    fn structural_at(&self, level: u32) -> Result<StructuralMeasure<T>> {
        StructuralMeasure::new(self.algebra_at(level)?, split_masses(&self.control, level))
    }

    fn measure_at(&self, level: u32) -> Result<OrthogonalStochasticMeasure<T>> {
        let algebra = self.algebra_at(level)?;
        let k = self.model.len();
        let group = 1usize << (self.depth - level);
        let height = Complex::new(self.control.iter().copied().sum::<T>().sqrt(), T::zero());
        let atom_values = (0..algebra.atom_count())
            .map(|j| {
                let mut v = vec![czero(); k];
                v[j * group..(j + 1) * group].fill(height);
                RandomElement::new(v)
            })
            .collect();
        OrthogonalStochasticMeasure::new(algebra, self.model.clone(), atom_values)
    }

    fn algebra_at(&self, level: u32) -> Result<AtomAlgebra<T>> {
        check_level(level, self.depth)?;
        if level == 0 {
            return Ok(self.base.clone());
        }
        Ok(refine(&self.base, 1 << level)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{validate_axioms, AxiomTolerance};

    fn white(level: u32) -> (AtomAlgebra<f64>, StructuralMeasure<f64>) {
        let a = AtomAlgebra::dyadic(level).unwrap();
        let n = a.atom_count();
        let s = StructuralMeasure::new(a.clone(), vec![1.0 / n as f64; n]).unwrap();
        (a, s)
    }

    #[test]
    fn coarse_levels_aggregate_fine_draws() {
        let (a, s) = white(1);
        let fam = GaussianFamily::new(a, &s, 8, 5).unwrap().with_depth(3).unwrap();
        let fine = fam.row_at(2, 3).unwrap();
        let coarse = fam.row_at(2, 1).unwrap();
        assert_eq!(fine.len(), 16);
        assert_eq!(coarse.len(), 4);
        let sum: Complex<f64> = fine[4..8].iter().sum();
        assert!((sum - coarse[1]).norm() < 1e-15);
        assert!(fam.row_at(0, 4).is_err());
    }

    #[test]
    fn scenario_substreams_do_not_depend_on_range() {
        let (a, s) = white(2);
        let fam = GaussianFamily::new(a, &s, 40, 11).unwrap();
        let all = fam.measure_at(0).unwrap();
        let part = fam.measure_for_scenarios(0, 10..20).unwrap();
        for j in 0..4 {
            assert_eq!(&all.atom_value(j).values()[10..20], part.atom_value(j).values());
        }
    }

    #[test]
    fn hermitian_rows_are_conjugate_mirrored() {
        let (a, s) = white(3);
        let fam = GaussianFamily::new(a, &s, 4, 1).unwrap().hermitian().unwrap();
        let row = fam.sample_row(0);
        for j in 0..8 {
            assert_eq!(row[j], row[7 - j].conj());
        }
        let (a, _) = white(2);
        let lopsided = StructuralMeasure::new(a.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(GaussianFamily::new(a, &lopsided, 4, 1).unwrap().hermitian().is_err());
    }

    #[test]
    fn indicator_family_is_exactly_orthogonal_at_every_level() {
        let a = AtomAlgebra::<f64>::dyadic(1).unwrap();
        let s = StructuralMeasure::new(a.clone(), vec![0.25, 0.75]).unwrap();
        let fam = IndicatorFamily::new(a, &s, 4).unwrap();
        for level in 0..=4 {
            let m = fam.measure_at(level).unwrap();
            assert!(validate_axioms(&m, AxiomTolerance::Absolute(0.0)).passed());
            let empirical = m.structural_measure();
            let reference = fam.structural_at(level).unwrap();
            for (x, y) in empirical.atom_masses().iter().zip(reference.atom_masses()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
