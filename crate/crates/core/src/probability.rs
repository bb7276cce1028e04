//! Weighted-scenario probability spaces and complex square-integrable
//! random variables over them.
//!
//! A [`ScenarioModel`] is a finite list of scenario weights. In exact mode the
//! weights are an arbitrary probability vector and every expectation is a
//! finite sum; in ensemble mode the weights are uniform and the scenarios are
//! Monte Carlo draws produced from a seed.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{czero, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Ensemble,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Exact => f.write_str("exact"),
            Mode::Ensemble => f.write_str("ensemble"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioModel<T> {
    weights: Vec<T>,
    mode: Mode,
    seed: Option<u64>,
}

impl<T: Real> ScenarioModel<T> {
    /// Exact probability space with the given scenario weights.
    pub fn exact(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Construction("scenario model needs at least one scenario".into()));
        }
        if let Some((k, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= T::zero()) || !w.is_finite()) {
            return Err(Error::Construction(format!("weight {k} is {w}, expected a finite value >= 0")));
        }
        let total: T = weights.iter().copied().sum();
        let tol = T::lit(1e-12).max(T::epsilon() * T::from_count(4 * weights.len()));
        if (total - T::one()).abs() > tol {
            return Err(Error::Construction(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { weights, mode: Mode::Exact, seed: None })
    }

    /// Exact probability space with `k` equally likely scenarios.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Construction("scenario model needs at least one scenario".into()));
        }
        let w = T::one() / T::from_count(k);
        Ok(Self { weights: vec![w; k], mode: Mode::Exact, seed: None })
    }

    /// Monte Carlo ensemble of `k` draws generated from `seed`.
    pub fn ensemble(k: usize, seed: u64) -> Result<Self> {
        let mut model = Self::uniform(k)?;
        model.mode = Mode::Ensemble;
        model.seed = Some(seed);
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn check(&self, x: &RandomElement<T>) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), found: x.len() });
        }
        Ok(())
    }

    /// `E x = sum_k w_k x_k`.
    pub fn expectation(&self, x: &RandomElement<T>) -> Result<Complex<T>> {
        self.check(x)?;
        Ok(self
            .weights
            .iter()
            .zip(&x.values)
            .fold(czero(), |acc, (w, v)| acc + v.scale(*w)))
    }

    /// `E x conj(y)`; linear in `x`, conjugate-linear in `y`.
    pub fn inner_product(&self, x: &RandomElement<T>, y: &RandomElement<T>) -> Result<Complex<T>> {
        self.check(x)?;
        self.check(y)?;
        Ok(self
            .weights
            .iter()
            .zip(x.values.iter().zip(&y.values))
            .fold(czero(), |acc, (w, (a, b))| acc + (a * b.conj()).scale(*w)))
    }

    /// `E |x|^2`, computed without forming complex products.
    pub fn second_moment(&self, x: &RandomElement<T>) -> Result<T> {
        self.check(x)?;
        Ok(self
            .weights
            .iter()
            .zip(&x.values)
            .fold(T::zero(), |acc, (w, v)| acc + *w * v.norm_sqr()))
    }

    pub fn l2_norm(&self, x: &RandomElement<T>) -> Result<T> {
        Ok(self.second_moment(x)?.sqrt())
    }

    pub fn l2_distance(&self, x: &RandomElement<T>, y: &RandomElement<T>) -> Result<T> {
        self.check(x)?;
        self.check(y)?;
        let sq = self
            .weights
            .iter()
            .zip(x.values.iter().zip(&y.values))
            .fold(T::zero(), |acc, (w, (a, b))| acc + *w * (a - b).norm_sqr());
        Ok(sq.sqrt())
    }
}

/// A complex value per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomElement<T> {
    values: Vec<Complex<T>>,
}

impl<T: Real> RandomElement<T> {
    pub fn new(values: Vec<Complex<T>>) -> Self {
        Self { values }
    }

    pub fn from_real(values: &[T]) -> Self {
        Self { values: values.iter().map(|v| Complex::new(*v, T::zero())).collect() }
    }

    pub fn zeros(k: usize) -> Self {
        Self { values: vec![czero(); k] }
    }

    /// Indicator of a set of scenario indices.
    pub fn indicator(k: usize, members: &[usize]) -> Result<Self> {
        let mut values = vec![czero(); k];
        for &i in members {
            let slot = values.get_mut(i).ok_or(Error::Dimension { expected: k, found: i + 1 })?;
            *slot = Complex::new(T::one(), T::zero());
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn conj(&self) -> Self {
        Self { values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: Complex<T>, other: &Self) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), found: other.len() });
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Result<Self> {
        if other.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), found: other.len() });
        }
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| op(*a, *b)).collect() })
    }

    /// Largest per-scenario modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if other.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), found: other.len() });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((a - b).norm())))
    }
}
