//! Spectral stochastic integrals.
//!
//! For a simple function `f = sum_j a_j 1_{atom j}` the integral against a
//! measure `M` is `sum_j a_j M(atom j)`. A general square-integrable integrand
//! is approximated by midpoint projections onto dyadic refinements, and its
//! integral is the L²(P) limit of the integrals of those projections; the
//! isometry lets the stopping rule be evaluated on the integrands alone.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::family::MeasureFamily;
use crate::measure::{OrthogonalStochasticMeasure, StructuralMeasure};
use crate::probability::RandomElement;
use crate::scalar::{cis, czero, Real};
use crate::set_system::{refine, AlgebraSet, AtomAlgebra, RefinementMap};

/// Complex coefficients on the atoms of an algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleFunction<T> {
    algebra: AtomAlgebra<T>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> SimpleFunction<T> {
    pub fn new(algebra: AtomAlgebra<T>, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() != algebra.atom_count() {
            return Err(Error::Dimension { expected: algebra.atom_count(), found: coeffs.len() });
        }
        Ok(Self { algebra, coeffs })
    }

    pub fn from_real(algebra: AtomAlgebra<T>, coeffs: &[T]) -> Result<Self> {
        Self::new(algebra, coeffs.iter().map(|c| Complex::new(*c, T::zero())).collect())
    }

    pub fn constant(algebra: AtomAlgebra<T>, c: Complex<T>) -> Self {
        let coeffs = vec![c; algebra.atom_count()];
        Self { algebra, coeffs }
    }

    pub fn zero(algebra: AtomAlgebra<T>) -> Self {
        Self::constant(algebra, czero())
    }

    /// `c 1_set`.
    pub fn indicator(algebra: AtomAlgebra<T>, set: &AlgebraSet, c: Complex<T>) -> Result<Self> {
        algebra.check_owns(set)?;
        let coeffs = (0..algebra.atom_count()).map(|j| if set.contains_atom(j) { c } else { czero() }).collect();
        Ok(Self { algebra, coeffs })
    }

    pub fn algebra(&self) -> &AtomAlgebra<T> {
        &self.algebra
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Result<Self> {
        if self.algebra != other.algebra {
            return Err(Error::AlgebraMismatch);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| op(*a, *b)).collect();
        Ok(Self { algebra: self.algebra.clone(), coeffs })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self { algebra: self.algebra.clone(), coeffs: self.coeffs.iter().map(|a| a * c).collect() }
    }

    pub fn conj(&self) -> Self {
        Self { algebra: self.algebra.clone(), coeffs: self.coeffs.iter().map(|a| a.conj()).collect() }
    }

    /// `|f|^2` as a simple function.
    pub fn modulus_squared(&self) -> Vec<T> {
        self.coeffs.iter().map(|a| a.norm_sqr()).collect()
    }

    /// The same function on a refinement of its algebra.
    pub fn lift(&self, fine: &AtomAlgebra<T>, map: &RefinementMap) -> Result<Self> {
        if map.coarse_atoms() != self.algebra.atom_count() || map.fine_atoms() != fine.atom_count() {
            return Err(Error::AlgebraMismatch);
        }
        let coeffs = (0..fine.atom_count()).map(|j| self.coeffs[map.parent(j)]).collect();
        Ok(Self { algebra: fine.clone(), coeffs })
    }
}

/// A pointwise-defined integrand `λ ↦ f(λ)` on an interval ground set.
#[derive(Clone)]
pub struct Integrand<T> {
    evaluator: Arc<dyn Fn(T) -> Complex<T> + Send + Sync>,
    square_integrable: bool,
}

impl<T> fmt::Debug for Integrand<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand").field("square_integrable", &self.square_integrable).finish_non_exhaustive()
    }
}

impl<T: Real> Integrand<T> {
    pub fn new(f: impl Fn(T) -> Complex<T> + Send + Sync + 'static) -> Self {
        Self { evaluator: Arc::new(f), square_integrable: true }
    }

    /// Marks the integrand as not known to be square-integrable. Integration
    /// still proceeds; only the Cauchy test decides.
    pub fn unbounded(mut self) -> Self {
        self.square_integrable = false;
        self
    }

    pub fn is_declared_square_integrable(&self) -> bool {
        self.square_integrable
    }

    pub fn constant(c: Complex<T>) -> Self {
        Self::new(move |_| c)
    }

    /// `λ ↦ e^{iλn}`.
    pub fn fourier_mode(n: i64) -> Self {
        let n = T::from_i64(n).expect("lag representable");
        Self::new(move |lambda| cis(lambda * n))
    }

    /// `1_{[lo, hi)}`.
    pub fn interval_indicator(lo: T, hi: T) -> Self {
        let one = Complex::new(T::one(), T::zero());
        Self::new(move |lambda| if lo <= lambda && lambda < hi { one } else { czero() })
    }

    pub fn eval(&self, x: T) -> Complex<T> {
        (self.evaluator)(x)
    }

    pub fn product(&self, other: &Self) -> Self {
        let (a, b) = (self.evaluator.clone(), other.evaluator.clone());
        Self { evaluator: Arc::new(move |x| a(x) * b(x)), square_integrable: self.square_integrable && other.square_integrable }
    }

    /// Zero outside the half-open interval `[lo, hi)`.
    pub fn restricted(&self, lo: T, hi: T) -> Self {
        let a = self.evaluator.clone();
        Self { evaluator: Arc::new(move |x| if lo <= x && x < hi { a(x) } else { czero() }), square_integrable: self.square_integrable }
    }
}

/// `∫ f dM = sum_j f_j M(atom j)`.
pub fn integrate_simple<T: Real>(
    f: &SimpleFunction<T>,
    measure: &OrthogonalStochasticMeasure<T>,
) -> Result<RandomElement<T>> {
    if f.algebra() != measure.algebra() {
        return Err(Error::AlgebraMismatch);
    }
    let k = measure.model().len();
    let mut out = vec![czero::<T>(); k];
    for (c, values) in f.coeffs().iter().zip(measure.atom_values()) {
        if *c == czero() {
            continue;
        }
        for (o, v) in out.iter_mut().zip(values.values()) {
            *o += c * v;
        }
    }
    Ok(RandomElement::new(out))
}

/// `|f|_{L²(M)} = sqrt(sum_j |f_j|^2 m_j)`.
pub fn l2_norm_simple<T: Real>(f: &SimpleFunction<T>, structural: &StructuralMeasure<T>) -> Result<T> {
    if f.algebra() != structural.algebra() {
        return Err(Error::AlgebraMismatch);
    }
    Ok(f.coeffs()
        .iter()
        .zip(structural.atom_masses())
        .map(|(c, m)| c.norm_sqr() * *m)
        .sum::<T>()
        .sqrt())
}

/// `∫ f conj(g) dM` for simple `f`, `g`.
pub fn structural_inner_product<T: Real>(
    f: &SimpleFunction<T>,
    g: &SimpleFunction<T>,
    structural: &StructuralMeasure<T>,
) -> Result<Complex<T>> {
    if f.algebra() != structural.algebra() || g.algebra() != structural.algebra() {
        return Err(Error::AlgebraMismatch);
    }
    Ok(f.coeffs()
        .iter()
        .zip(g.coeffs())
        .zip(structural.atom_masses())
        .fold(czero(), |acc, ((a, b), m)| acc + (a * b.conj()).scale(*m)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsometryCheck<T> {
    /// `E (∫ f dM) conj(∫ g dM)`.
    pub lhs: Complex<T>,
    /// `∫ f conj(g) dm` with `m` the measure's structural measure.
    pub rhs: Complex<T>,
    pub gap: T,
    /// `|f|_{L²(M)} |g|_{L²(M)}`, the Cauchy-Schwarz bound on both sides.
    pub scale: T,
}

impl<T: Real> IsometryCheck<T> {
    /// `gap / scale`, zero when both functions vanish in L²(M).
    pub fn relative_gap(&self) -> T {
        if self.scale > T::zero() {
            self.gap / self.scale
        } else {
            self.gap
        }
    }
}

pub fn isometry_check<T: Real>(
    f: &SimpleFunction<T>,
    g: &SimpleFunction<T>,
    measure: &OrthogonalStochasticMeasure<T>,
) -> Result<IsometryCheck<T>> {
    let structural = measure.structural_measure();
    let lhs = measure.model().inner_product(&integrate_simple(f, measure)?, &integrate_simple(g, measure)?)?;
    let rhs = structural_inner_product(f, g, &structural)?;
    let scale = l2_norm_simple(f, &structural)? * l2_norm_simple(g, &structural)?;
    Ok(IsometryCheck { lhs, rhs, gap: (lhs - rhs).norm(), scale })
}

/// Midpoint projection of `f` onto `refine(algebra, factor)`.
pub fn project_to_simple<T: Real>(
    f: &Integrand<T>,
    algebra: &AtomAlgebra<T>,
    factor: usize,
) -> Result<SimpleFunction<T>> {
    if algebra.intervals().is_none() {
        return Err(Error::Unsupported("projection needs interval atoms".into()));
    }
    let (fine, _) = refine(algebra, factor)?;
    project_onto(f, &fine)
}

fn project_onto<T: Real>(f: &Integrand<T>, algebra: &AtomAlgebra<T>) -> Result<SimpleFunction<T>> {
    let mids = algebra.midpoints().ok_or_else(|| Error::Unsupported("projection needs interval atoms".into()))?;
    SimpleFunction::new(algebra.clone(), mids.into_iter().map(|x| f.eval(x)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2Integral<T> {
    pub value: RandomElement<T>,
    /// Refinement level of the simple approximation that was integrated.
    pub level: u32,
    /// `|f_{next} - f_{current}|_{L²(M)}` for each step of the schedule taken.
    pub cauchy_gaps: Vec<T>,
    /// `|f_{level} - f_{finest}|_{L²(M)}` against the last scheduled level.
    pub tail_gap: T,
}

/// L² integral along the schedule `0, 1, 2, .., max_level`.
pub fn integrate_l2<T: Real, F: MeasureFamily<T>>(
    f: &Integrand<T>,
    family: &F,
    target_eps: T,
    max_level: u32,
) -> Result<L2Integral<T>> {
    let levels: Vec<u32> = (0..=max_level).collect();
    integrate_l2_scheduled(f, family, target_eps, &levels)
}

/// L² integral along an increasing schedule of refinement levels.
///
/// Stops at the first scheduled level whose projection is within
/// `target_eps` (in L²(M) of the family's reference structural measure) of
/// the projection at the next scheduled level, and integrates the projection
/// at that level. A level is accepted only if its projection is also within
/// `target_eps` of the projection at the last scheduled level: midpoint
/// projections of `e^{iλn}` alias on coarse grids and can repeat exactly
/// for several levels before the oscillation is resolved.
pub fn integrate_l2_scheduled<T: Real, F: MeasureFamily<T>>(
    f: &Integrand<T>,
    family: &F,
    target_eps: T,
    levels: &[u32],
) -> Result<L2Integral<T>> {
    if !(target_eps > T::zero()) {
        return Err(Error::Argument(format!("target eps must be positive, got {target_eps}")));
    }
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("level schedule must be nonempty and strictly increasing".into()));
    }
    if let Some(&top) = levels.last() {
        if top > family.max_level() {
            return Err(Error::Argument(format!("schedule reaches level {top}, family depth is {}", family.max_level())));
        }
    }

    let base = family.base_algebra();
    let finest = *levels.last().expect("nonempty");
    let finest_algebra = family.algebra_at(finest)?;
    let finest_projection = project_onto(f, &finest_algebra)?;
    let finest_structural = family.structural_at(finest)?;
    let distance_to_finest = |g: &SimpleFunction<T>, level: u32| -> Result<T> {
        let map = RefinementMap::new(base.atom_count() << level, 1 << (finest - level));
        l2_norm_simple(&g.lift(&finest_algebra, &map)?.try_sub(&finest_projection)?, &finest_structural)
    };

    let mut current = project_onto(f, &family.algebra_at(levels[0])?)?;
    let mut cauchy_gaps = Vec::new();

    for w in levels.windows(2) {
        let (coarse, fine) = (w[0], w[1]);
        let fine_algebra = family.algebra_at(fine)?;
        let next = project_onto(f, &fine_algebra)?;
        let map = RefinementMap::new(base.atom_count() << coarse, 1 << (fine - coarse));
        let lifted = current.lift(&fine_algebra, &map)?;
        let gap = l2_norm_simple(&lifted.try_sub(&next)?, &family.structural_at(fine)?)?;
        cauchy_gaps.push(gap);
        if gap < target_eps {
            let tail_gap = distance_to_finest(&current, coarse)?;
            if tail_gap < target_eps {
                let measure = family.measure_at(coarse)?;
                if l2_norm_simple(&current, &family.structural_at(coarse)?)? == T::zero() {
                    // L²(M)-equivalent to zero
                    let k = measure.model().len();
                    return Ok(L2Integral { value: RandomElement::zeros(k), level: coarse, cauchy_gaps, tail_gap });
                }
                let value = integrate_simple(&current, &measure)?;
                return Ok(L2Integral { value, level: coarse, cauchy_gaps, tail_gap });
            }
        }
        current = next;
    }

    Err(Error::NonConvergence {
        max_level: *levels.last().expect("nonempty"),
        last_gap: cauchy_gaps.last().map(|g| g.as_f64()).unwrap_or(f64::NAN),
        target: target_eps.as_f64(),
        gaps: cauchy_gaps.iter().map(|g| g.as_f64()).collect(),
    })
}
