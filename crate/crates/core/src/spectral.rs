//! Covariance-stationary sequences as spectral stochastic integrals.
//!
//! `X_n = ∫ e^{iλn} dZ(λ)` over `[-pi, pi)`, where `Z` is a Gaussian
//! orthogonal-increment measure whose control masses come from a spectral
//! density. On a dyadic discretization with atom midpoints `λ_j` the integral
//! is `sum_j e^{iλ_j n} Z(Δ_j)`, and the covariance `E X_n conj(X_0)` is the
//! discrete Herglotz sum `sum_j e^{iλ_j n} F(Δ_j)`.
//!
//! Filtering by a transfer function `g` is integration against the derived
//! measure `∫ 1_B g dZ`, so each filtered path is computed both ways.

use std::ops::Range;

use num_complex::Complex;
use rayon::prelude::*;

use crate::change_of_measure::derive_measure;
use crate::error::{Error, Result};
use crate::family::{GaussianFamily, MeasureFamily};
use crate::integration::{integrate_simple, project_to_simple, Integrand, SimpleFunction};
use crate::measure::StructuralMeasure;
use crate::probability::RandomElement;
use crate::scalar::{cis, czero, Real};
use crate::set_system::AtomAlgebra;

/// Scenarios materialized at once while simulating.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity<T> {
    /// Flat density `σ² / 2π`.
    White { variance: T },
    /// Density `σ² / (2π (1 - 2φ cos λ + φ²))` of a stationary AR(1) sequence.
    Ar1 { variance: T, phi: T },
    /// Explicit mass per dyadic atom.
    Table(Vec<T>),
}

impl<T: Real> SpectralDensity<T> {
    pub fn validate(&self) -> Result<()> {
        let check_variance = |v: T| {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::Argument(format!("variance must be finite and >= 0, got {v}")));
            }
            Ok(())
        };
        match self {
            SpectralDensity::White { variance } => check_variance(*variance),
            SpectralDensity::Ar1 { variance, phi } => {
                check_variance(*variance)?;
                if !(phi.abs() < T::one()) {
                    return Err(Error::Argument(format!("AR(1) coefficient must lie in (-1, 1), got {phi}")));
                }
                Ok(())
            }
            SpectralDensity::Table(masses) => {
                if !masses.len().is_power_of_two() {
                    return Err(Error::Argument(format!("table has {} entries, expected a power of two", masses.len())));
                }
                if let Some(m) = masses.iter().find(|m| !(**m >= T::zero()) || !m.is_finite()) {
                    return Err(Error::Argument(format!("table mass {m} is not finite and >= 0")));
                }
                Ok(())
            }
        }
    }

    /// Spectral density at `λ`, for the closed-form kinds.
    pub fn density(&self, lambda: T) -> Option<T> {
        let two_pi = T::TAU();
        match self {
            SpectralDensity::White { variance } => Some(*variance / two_pi),
            SpectralDensity::Ar1 { variance, phi } => {
                Some(*variance / (two_pi * (T::one() - T::lit(2.0) * *phi * lambda.cos() + *phi * *phi)))
            }
            SpectralDensity::Table(_) => None,
        }
    }

    /// Control masses on the `2^level` dyadic atoms, by midpoint evaluation.
    pub fn masses(&self, level: u32) -> Result<Vec<T>> {
        self.validate()?;
        let algebra = AtomAlgebra::<T>::dyadic(level)?;
        match self {
            SpectralDensity::Table(masses) => {
                if masses.len() != algebra.atom_count() {
                    return Err(Error::Argument(format!(
                        "table has {} entries, level {level} has {} atoms",
                        masses.len(),
                        algebra.atom_count()
                    )));
                }
                Ok(masses.clone())
            }
            _ => {
                let width = T::TAU() / T::from_count(algebra.atom_count());
                Ok(algebra
                    .midpoints()
                    .expect("dyadic atoms are intervals")
                    .into_iter()
                    .map(|x| self.density(x).expect("closed form") * width)
                    .collect())
            }
        }
    }

    pub fn control_measure(&self, level: u32) -> Result<StructuralMeasure<T>> {
        StructuralMeasure::new(AtomAlgebra::dyadic(level)?, self.masses(level)?)
    }

    /// Natural level of a table density.
    fn table_level(&self) -> Option<u32> {
        match self {
            SpectralDensity::Table(m) => Some(m.len().trailing_zeros()),
            _ => None,
        }
    }
}

/// Paths `X_n^{(k)}` for lags `n` in `-N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEnsemble<T> {
    pub max_lag: usize,
    /// One row of `2N + 1` values per scenario, lag `-N` first.
    pub paths: Vec<Vec<Complex<T>>>,
    pub level: u32,
    pub seed: u64,
}

impl<T: Real> StationaryEnsemble<T> {
    pub fn scenarios(&self) -> usize {
        self.paths.len()
    }

    pub fn lags(&self) -> std::ops::RangeInclusive<i64> {
        -(self.max_lag as i64)..=self.max_lag as i64
    }

    fn slot(&self, n: i64) -> Result<usize> {
        if n.unsigned_abs() as usize > self.max_lag {
            return Err(Error::Argument(format!("lag {n} outside -{0}..={0}", self.max_lag)));
        }
        Ok((n + self.max_lag as i64) as usize)
    }

    pub fn value(&self, scenario: usize, n: i64) -> Result<Complex<T>> {
        let slot = self.slot(n)?;
        Ok(self.paths[scenario][slot])
    }

    /// `X_n` as a random element over the ensemble.
    pub fn component(&self, n: i64) -> Result<RandomElement<T>> {
        let slot = self.slot(n)?;
        Ok(RandomElement::new(self.paths.iter().map(|p| p[slot]).collect()))
    }

    /// Largest per-scenario, per-lag modulus of the difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.paths.len() != other.paths.len() || self.max_lag != other.max_lag {
            return Err(Error::Dimension { expected: self.paths.len(), found: other.paths.len() });
        }
        Ok(self
            .paths
            .iter()
            .zip(&other.paths)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(T::zero(), T::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimulationOptions {
    /// Conjugate draws on mirror-image atoms, producing real paths.
    pub hermitian: bool,
}

fn base_family<T: Real>(
    spec: &SpectralDensity<T>,
    level: u32,
    scenarios: usize,
    seed: u64,
    options: SimulationOptions,
) -> Result<GaussianFamily<T>> {
    if level < 1 {
        return Err(Error::Argument("spectral level must be at least 1".into()));
    }
    let control = spec.control_measure(level)?;
    let family = GaussianFamily::new(control.algebra().clone(), &control, scenarios, seed)?;
    if options.hermitian {
        family.hermitian()
    } else {
        Ok(family)
    }
}

fn fourier_modes<T: Real>(algebra: &AtomAlgebra<T>, max_lag: usize) -> Result<Vec<SimpleFunction<T>>> {
    let n = max_lag as i64;
    (-n..=n).map(|lag| project_to_simple(&Integrand::fourier_mode(lag), algebra, 1)).collect()
}

/// Runs `per_chunk` over scenario chunks in parallel and stitches the rows back in order.
fn chunked_paths<T: Real>(
    scenarios: usize,
    per_chunk: impl Fn(Range<usize>) -> Result<Vec<Vec<Complex<T>>>> + Sync,
) -> Result<Vec<Vec<Complex<T>>>> {
    let starts: Vec<usize> = (0..scenarios).step_by(CHUNK).collect();
    let chunks: Vec<Vec<Vec<Complex<T>>>> = starts
        .par_iter()
        .map(|&s| per_chunk(s..(s + CHUNK).min(scenarios)))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Transposes per-lag integrals into per-scenario rows.
fn rows_from_columns<T: Real>(columns: &[RandomElement<T>], count: usize) -> Vec<Vec<Complex<T>>> {
    (0..count).map(|k| columns.iter().map(|c| c.values()[k]).collect()).collect()
}

/// `X_n = ∫ e^{iλn} dZ` on the level's dyadic atoms, for `n` in `-N..=N`.
pub fn simulate_process<T: Real>(
    spec: &SpectralDensity<T>,
    level: u32,
    scenarios: usize,
    seed: u64,
    max_lag: usize,
) -> Result<StationaryEnsemble<T>> {
    simulate_process_with(spec, level, scenarios, seed, max_lag, SimulationOptions::default())
}

pub fn simulate_process_with<T: Real>(
    spec: &SpectralDensity<T>,
    level: u32,
    scenarios: usize,
    seed: u64,
    max_lag: usize,
    options: SimulationOptions,
) -> Result<StationaryEnsemble<T>> {
    let family = base_family(spec, level, scenarios, seed, options)?;
    let modes = fourier_modes(family.base_algebra(), max_lag)?;
    let paths = chunked_paths(scenarios, |range| {
        let count = range.len();
        let measure = family.measure_for_scenarios(0, range)?;
        let columns = modes.iter().map(|f| integrate_simple(f, &measure)).collect::<Result<Vec<_>>>()?;
        Ok(rows_from_columns(&columns, count))
    })?;
    Ok(StationaryEnsemble { max_lag, paths, level, seed })
}

/// Ensemble average of `X_n conj(X_0)`.
pub fn estimate_covariance<T: Real>(ensemble: &StationaryEnsemble<T>, n: i64) -> Result<Complex<T>> {
    let slot = ensemble.slot(n)?;
    let zero = ensemble.slot(0)?;
    let sum = ensemble.paths.iter().fold(czero::<T>(), |acc, p| acc + p[slot] * p[zero].conj());
    Ok(sum / T::from_count(ensemble.scenarios()))
}

/// `sum_j e^{iλ_j n} F(Δ_j)` over the level's dyadic atoms.
pub fn herglotz_covariance<T: Real>(spec: &SpectralDensity<T>, level: u32, n: i64) -> Result<Complex<T>> {
    if (1u64 << level) < 8 * n.unsigned_abs() {
        return Err(Error::Resolution { lag: n, level });
    }
    let masses = spec.masses(level)?;
    let mids = AtomAlgebra::<T>::dyadic(level)?.midpoints().expect("dyadic atoms are intervals");
    let lag = T::from_i64(n).expect("lag representable");
    Ok(mids.iter().zip(&masses).fold(czero(), |acc, (x, m)| acc + cis(*x * lag).scale(*m)))
}

/// Estimated midpoint-rule error of [`herglotz_covariance`] against the
/// continuous density, `(4/3) |H_level - H_{level+1}|`. Zero for tables,
/// whose discretization is the model itself.
pub fn quadrature_error_estimate<T: Real>(spec: &SpectralDensity<T>, level: u32, n: i64) -> Result<T> {
    if spec.table_level().is_some() {
        herglotz_covariance(spec, level, n)?;
        return Ok(T::zero());
    }
    let coarse = herglotz_covariance(spec, level, n)?;
    let fine = herglotz_covariance(spec, level + 1, n)?;
    Ok(T::lit(4.0 / 3.0) * (coarse - fine).norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput<T> {
    /// `∫ e^{iλn} g dZ`, integrating the product projection against the base.
    pub direct: StationaryEnsemble<T>,
    /// `∫ e^{iλn} dZ2` with `Z2 = ∫ 1_B g dZ`.
    pub derived: StationaryEnsemble<T>,
    /// Masses `|g(λ_j)|² F(Δ_j)` of the filtered process.
    pub derived_spec: SpectralDensity<T>,
    /// Largest per-scenario, per-lag gap between the two routes.
    pub max_pathwise_gap: T,
}

/// Filters the process of `spec` by the transfer function `g`.
pub fn filter_process<T: Real>(
    spec: &SpectralDensity<T>,
    level: u32,
    scenarios: usize,
    seed: u64,
    max_lag: usize,
    transfer: &Integrand<T>,
    options: SimulationOptions,
) -> Result<FilterOutput<T>> {
    let family = base_family(spec, level, scenarios, seed, options)?;
    let algebra = family.base_algebra().clone();
    let modes = fourier_modes(&algebra, max_lag)?;
    let g = project_to_simple(transfer, &algebra, 1)?;
    let products = modes.iter().map(|f| f.try_mul(&g)).collect::<Result<Vec<_>>>()?;

    let both = chunked_paths(scenarios, |range| {
        let count = range.len();
        let base = family.measure_for_scenarios(0, range)?;
        let bundle = derive_measure(&base, &g)?;
        let mut columns = Vec::with_capacity(2 * modes.len());
        for fg in &products {
            columns.push(integrate_simple(fg, &base)?);
        }
        for f in &modes {
            columns.push(integrate_simple(f, &bundle.derived)?);
        }
        Ok(rows_from_columns(&columns, count))
    })?;

    let width = modes.len();
    let direct = StationaryEnsemble { max_lag, paths: both.iter().map(|r| r[..width].to_vec()).collect(), level, seed };
    let derived = StationaryEnsemble { max_lag, paths: both.iter().map(|r| r[width..].to_vec()).collect(), level, seed };
    let max_pathwise_gap = direct.max_abs_diff(&derived)?;
    let base_masses = spec.masses(level)?;
    let derived_spec =
        SpectralDensity::Table(g.modulus_squared().iter().zip(&base_masses).map(|(a, m)| *a * *m).collect());
    Ok(FilterOutput { direct, derived, derived_spec, max_pathwise_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::MeasureFamily;
    use num_complex::Complex64;

    #[test]
    fn lag_zero_is_total_increment() {
        let spec = SpectralDensity::White { variance: 2.0 };
        let ens = simulate_process(&spec, 4, 50, 3, 2).unwrap();
        let control = spec.control_measure(4).unwrap();
        let fam = GaussianFamily::new(control.algebra().clone(), &control, 50, 3).unwrap();
        let total = fam.measure_at(0).unwrap().evaluate(&control.algebra().full_set()).unwrap();
        for k in 0..50 {
            assert!((ens.value(k, 0).unwrap() - total.values()[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn simulation_matches_direct_integration() {
        let spec = SpectralDensity::Ar1 { variance: 1.0, phi: -0.3 };
        let ens = simulate_process(&spec, 5, 300, 12, 3).unwrap();
        let control = spec.control_measure(5).unwrap();
        let measure = GaussianFamily::new(control.algebra().clone(), &control, 300, 12).unwrap().measure_at(0).unwrap();
        for n in -3..=3 {
            let f = project_to_simple(&Integrand::fourier_mode(n), control.algebra(), 1).unwrap();
            let direct = integrate_simple(&f, &measure).unwrap();
            assert_eq!(ens.component(n).unwrap(), direct);
        }
    }

    #[test]
    fn same_seed_same_paths() {
        let spec = SpectralDensity::White { variance: 1.0 };
        let a = simulate_process(&spec, 6, 600, 99, 4).unwrap();
        let b = simulate_process(&spec, 6, 600, 99, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        assert!(SpectralDensity::Ar1 { variance: 1.0, phi: 1.0 }.validate().is_err());
        assert!(SpectralDensity::White { variance: -1.0 }.validate().is_err());
        assert!(SpectralDensity::Table(vec![0.1, 0.2, 0.3]).validate().is_err());
        assert!(simulate_process(&SpectralDensity::White { variance: 1.0 }, 0, 10, 1, 1).is_err());
        assert!(simulate_process(&SpectralDensity::White { variance: 1.0 }, 3, 1, 1, 1).is_err());
        assert!(simulate_process(&SpectralDensity::Table(vec![0.25; 4]), 3, 10, 1, 1).is_err());
    }

    #[test]
    fn herglotz_values() {
        let white = SpectralDensity::White { variance: 1.7 };
        assert!((herglotz_covariance(&white, 6, 0).unwrap() - Complex64::new(1.7, 0.0)).norm() < 1e-14);
        assert!(herglotz_covariance(&white, 6, 5).unwrap().norm() < 1e-14);
        assert!(matches!(herglotz_covariance(&white, 4, 3), Err(Error::Resolution { lag: 3, level: 4 })));

        // Oracle: stationary AR(1) autocovariance σ² φ^|n| / (1 - φ²).
        let phi = 0.5;
        let ar1 = SpectralDensity::Ar1 { variance: 1.0, phi };
        let exact = phi * phi / (1.0 - phi * phi);
        let err = |level| (herglotz_covariance(&ar1, level, 2).unwrap() - Complex64::new(exact, 0.0)).norm();
        // Midpoint sums of a smooth periodic density converge geometrically.
        assert!(err(5) < err(4) * 1e-3);
        assert!(err(10) < 1e-14);
        let est = quadrature_error_estimate(&ar1, 4, 2).unwrap();
        assert!(est >= err(4) && est < 2.0 * err(4));
        assert!(quadrature_error_estimate(&ar1, 10, 2).unwrap() < 1e-14);
    }

    #[test]
    fn estimate_covariance_lag_range() {
        let ens = simulate_process(&SpectralDensity::White { variance: 1.0 }, 3, 10, 1, 2).unwrap();
        assert!(estimate_covariance(&ens, 3).is_err());
        let c0 = estimate_covariance(&ens, 0).unwrap();
        assert!(c0.re >= 0.0 && c0.im == 0.0);
    }

    #[test]
    fn unit_filter_is_identity() {
        let spec = SpectralDensity::Ar1 { variance: 1.0, phi: 0.4 };
        let input = simulate_process(&spec, 5, 300, 8, 3).unwrap();
        let out = filter_process(&spec, 5, 300, 8, 3, &Integrand::constant(Complex64::new(1.0, 0.0)), Default::default())
            .unwrap();
        assert_eq!(out.direct, input);
        assert!(out.derived.max_abs_diff(&input).unwrap() < 1e-12);
    }

    #[test]
    fn hermitian_paths_are_real() {
        let spec = SpectralDensity::Ar1 { variance: 1.0f64, phi: 0.6 };
        let opts = SimulationOptions { hermitian: true };
        let ens = simulate_process_with(&spec, 6, 200, 5, 4, opts).unwrap();
        for row in &ens.paths {
            for x in row {
                assert!(x.im.abs() < 1e-12);
            }
        }
        let table = SpectralDensity::Table(vec![0.1, 0.2, 0.3, 0.4]);
        assert!(simulate_process_with(&table, 2, 10, 1, 1, opts).is_err());
    }
}
