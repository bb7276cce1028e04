//! Change of measures for spectral stochastic integrals.
//!
//! Given a base measure `M1` and a density `g` square-integrable against its
//! structural measure, `M2(B) = ∫ 1_B g dM1` is again an orthogonal stochastic
//! measure, with structural measure `B ↦ ∫ 1_B |g|^2 dM1`, and
//! `∫ f dM2 = ∫ f g dM1` for every `f` square-integrable against `M2`.
//!
//! Simple densities are handled in closed form on the base algebra. General
//! densities go through [`integrate_l2`] atom by atom, or through a
//! [`DerivedFamily`] when the derived measure itself must be refined.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::family::MeasureFamily;
use crate::integration::{integrate_l2, integrate_simple, project_to_simple, Integrand, SimpleFunction};
use crate::measure::{OrthogonalStochasticMeasure, StructuralMeasure};
use crate::probability::RandomElement;
use crate::scalar::Real;
use crate::set_system::AlgebraSet;

#[derive(Debug, Clone)]
pub enum Density<T> {
    Simple(SimpleFunction<T>),
    General(Integrand<T>),
}

#[derive(Debug, Clone)]
pub struct DerivedMeasureBundle<T> {
    pub base: OrthogonalStochasticMeasure<T>,
    pub density: Density<T>,
    pub derived: OrthogonalStochasticMeasure<T>,
    /// `E|M2(atom)|^2`, computed from the derived measure's values.
    pub derived_structural: StructuralMeasure<T>,
    /// `∫_{atom} |g|^2 dM1`, computed from the density and the base measure's
    /// structural masses.
    pub density_structural: StructuralMeasure<T>,
}

/// `M2(atom j) = ∫ 1_{atom j} g dM1` for a simple density `g`.
pub fn derive_measure<T: Real>(
    base: &OrthogonalStochasticMeasure<T>,
    g: &SimpleFunction<T>,
) -> Result<DerivedMeasureBundle<T>> {
    let algebra = base.algebra();
    if g.algebra() != algebra {
        return Err(Error::AlgebraMismatch);
    }
    // 1_{atom j} g is g_j on atom j and zero elsewhere
    let atom_values = (0..algebra.atom_count())
        .map(|j| {
            let localized = SimpleFunction::indicator(algebra.clone(), &algebra.atom_set(j)?, g.coeffs()[j])?;
            integrate_simple(&localized, base)
        })
        .collect::<Result<Vec<_>>>()?;
    let derived = OrthogonalStochasticMeasure::new(algebra.clone(), base.model().clone(), atom_values)?;
    let base_masses = base.structural_measure();
    let density_masses =
        g.modulus_squared().iter().zip(base_masses.atom_masses()).map(|(g2, m)| *g2 * *m).collect();
    Ok(DerivedMeasureBundle {
        base: base.clone(),
        density: Density::Simple(g.clone()),
        derived_structural: derived.structural_measure(),
        density_structural: StructuralMeasure::new(algebra.clone(), density_masses)?,
        derived,
    })
}

/// `M2(atom j) = ∫ 1_{atom j} g dM1` for a general density, each atom's
/// integral taken in L² over the family's refinements of the base algebra.
pub fn derive_measure_l2<T: Real, F: MeasureFamily<T>>(
    family: &F,
    g: &Integrand<T>,
    target_eps: T,
    max_level: u32,
) -> Result<DerivedMeasureBundle<T>> {
    let algebra = family.base_algebra().clone();
    let intervals = algebra
        .intervals()
        .ok_or_else(|| Error::Unsupported("general densities need an interval base algebra".into()))?
        .to_vec();
    let base = family.measure_at(0)?;
    let mut atom_values = Vec::with_capacity(intervals.len());
    let mut density_masses = Vec::with_capacity(intervals.len());
    for iv in &intervals {
        let local = g.restricted(iv.lo, iv.hi);
        let integral = integrate_l2(&local, family, target_eps, max_level)?;
        let projected = project_to_simple(&local, &algebra, 1 << integral.level)?;
        let structural = family.structural_at(integral.level)?;
        density_masses.push(
            projected.modulus_squared().iter().zip(structural.atom_masses()).map(|(a, m)| *a * *m).sum(),
        );
        atom_values.push(integral.value);
    }
    let derived = OrthogonalStochasticMeasure::new(algebra.clone(), base.model().clone(), atom_values)?;
    Ok(DerivedMeasureBundle {
        density: Density::General(g.clone()),
        derived_structural: derived.structural_measure(),
        density_structural: StructuralMeasure::new(algebra, density_masses)?,
        derived,
        base,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralIdentityCheck<T> {
    /// `E|M2(B)|^2`.
    pub lhs: T,
    /// `∫ 1_B |g|^2 dM1`.
    pub rhs: T,
    pub gap: T,
}

impl<T: Real> StructuralIdentityCheck<T> {
    pub fn relative_gap(&self) -> T {
        if self.rhs > T::zero() {
            self.gap / self.rhs
        } else {
            self.gap
        }
    }
}

pub fn structural_identity_check<T: Real>(
    bundle: &DerivedMeasureBundle<T>,
    set: &AlgebraSet,
) -> Result<StructuralIdentityCheck<T>> {
    let lhs = bundle.derived.model().second_moment(&bundle.derived.evaluate(set)?)?;
    let rhs = bundle.density_structural.mass(set)?;
    Ok(StructuralIdentityCheck { lhs, rhs, gap: (lhs - rhs).abs() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeOfMeasureCheck<T> {
    /// `∫ f dM2`.
    pub lhs: RandomElement<T>,
    /// `∫ f g dM1`.
    pub rhs: RandomElement<T>,
    /// `|lhs - rhs|_{L²(P)}`.
    pub l2_gap: T,
    /// Largest per-scenario `|lhs - rhs|`.
    pub max_pathwise_gap: T,
}

fn compare<T: Real>(
    base: &OrthogonalStochasticMeasure<T>,
    lhs: RandomElement<T>,
    rhs: RandomElement<T>,
) -> Result<ChangeOfMeasureCheck<T>> {
    let l2_gap = base.model().l2_distance(&lhs, &rhs)?;
    let max_pathwise_gap = lhs.max_abs_diff(&rhs)?;
    Ok(ChangeOfMeasureCheck { lhs, rhs, l2_gap, max_pathwise_gap })
}

/// Both sides of `∫ f dM2 = ∫ f g dM1` for simple `f` and a simple density.
pub fn verify_change_of_measure<T: Real>(
    bundle: &DerivedMeasureBundle<T>,
    f: &SimpleFunction<T>,
) -> Result<ChangeOfMeasureCheck<T>> {
    let Density::Simple(g) = &bundle.density else {
        return Err(Error::Unsupported(
            "general densities are verified through verify_change_of_measure_l2".into(),
        ));
    };
    let lhs = integrate_simple(f, &bundle.derived)?;
    let rhs = integrate_simple(&f.try_mul(g)?, &bundle.base)?;
    compare(&bundle.base, lhs, rhs)
}

/// The derived measure of a general density, refined level by level: at
/// level `l` its atoms are `g(λ_j) M1(atom_j)` over the level-`l` atoms with
/// midpoints `λ_j`.
pub struct DerivedFamily<'a, T, F> {
    base: &'a F,
    density: Integrand<T>,
}

impl<'a, T: Real, F: MeasureFamily<T>> DerivedFamily<'a, T, F> {
    pub fn new(base: &'a F, density: Integrand<T>) -> Self {
        Self { base, density }
    }

    fn density_at(&self, level: u32) -> Result<SimpleFunction<T>> {
        project_to_simple(&self.density, self.base.base_algebra(), 1 << level)
    }
}

impl<T: Real, F: MeasureFamily<T>> MeasureFamily<T> for DerivedFamily<'_, T, F> {
    fn base_algebra(&self) -> &crate::set_system::AtomAlgebra<T> {
        self.base.base_algebra()
    }

    fn max_level(&self) -> u32 {
        self.base.max_level()
    }

    fn structural_at(&self, level: u32) -> Result<StructuralMeasure<T>> {
        let reference = self.base.structural_at(level)?;
        let g = self.density_at(level)?;
        let masses = g.modulus_squared().iter().zip(reference.atom_masses()).map(|(a, m)| *a * *m).collect();
        StructuralMeasure::new(reference.algebra().clone(), masses)
    }

    fn measure_at(&self, level: u32) -> Result<OrthogonalStochasticMeasure<T>> {
        let base = self.base.measure_at(level)?;
        let g = self.density_at(level)?;
        Ok(derive_measure(&base, &g)?.derived)
    }

    fn algebra_at(&self, level: u32) -> Result<crate::set_system::AtomAlgebra<T>> {
        self.base.algebra_at(level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2ChangeOfMeasureCheck<T> {
    pub check: ChangeOfMeasureCheck<T>,
    pub lhs_level: u32,
    pub rhs_level: u32,
    /// Tolerance implied by the two Cauchy stopping rules.
    pub tolerance: T,
}

/// Both sides of `∫ f dM2 = ∫ f g dM1` for general `f` and `g`, each an L²
/// integral stopped at `target_eps`.
pub fn verify_change_of_measure_l2<T: Real, F: MeasureFamily<T>>(
    family: &F,
    g: &Integrand<T>,
    f: &Integrand<T>,
    target_eps: T,
    max_level: u32,
) -> Result<L2ChangeOfMeasureCheck<T>> {
    let derived = DerivedFamily::new(family, g.clone());
    let lhs = integrate_l2(f, &derived, target_eps, max_level)?;
    let rhs = integrate_l2(&f.product(g), family, target_eps, max_level)?;
    let base = family.measure_at(0)?;
    let check = compare(&base, lhs.value, rhs.value)?;
    // Each side stops within roughly one Cauchy gap of its limit.
    let tolerance = T::lit(4.0) * target_eps;
    Ok(L2ChangeOfMeasureCheck { check, lhs_level: lhs.level, rhs_level: rhs.level, tolerance })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditivityGap<T> {
    /// `E|M2(A) - sum_{j <= n} M2(A_j)|^2`.
    pub gap: T,
    /// `∫ 1_{A \ (A_1 ∪ .. ∪ A_n)} |g|^2 dM1`.
    pub reference: T,
}

/// L² remainder after the first `n` members of a disjoint decomposition of `target`.
pub fn countable_additivity_gap<T: Real>(
    bundle: &DerivedMeasureBundle<T>,
    target: &AlgebraSet,
    pieces: &[AlgebraSet],
    n: usize,
) -> Result<AdditivityGap<T>> {
    if n > pieces.len() {
        return Err(Error::Argument(format!("n = {n} exceeds the {} pieces supplied", pieces.len())));
    }
    for (i, a) in pieces.iter().enumerate() {
        if !a.is_subset_of(target)? {
            return Err(Error::Argument(format!("piece {i} is not contained in the target set")));
        }
        for (j, b) in pieces.iter().enumerate().skip(i + 1) {
            if !a.is_disjoint(b)? {
                return Err(Error::Argument(format!("pieces {i} and {j} overlap")));
            }
        }
    }
    let mut remainder_value = bundle.derived.evaluate(target)?;
    let mut remainder_set = target.clone();
    for piece in &pieces[..n] {
        remainder_value.add_scaled(Complex::new(-T::one(), T::zero()), &bundle.derived.evaluate(piece)?)?;
        remainder_set = remainder_set.difference(piece)?;
    }
    Ok(AdditivityGap {
        gap: bundle.derived.model().second_moment(&remainder_value)?,
        reference: bundle.density_structural.mass(&remainder_set)?,
    })
}
