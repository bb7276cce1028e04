//! Finite atom-partition algebras and their sets.
//!
//! An [`AtomAlgebra`] is a partition of a ground set into finitely many atoms;
//! the algebra it generates (which is also its sigma-algebra) consists of all
//! unions of atoms. Sets are stored as bitmasks over atom indices.
//!
//! Two backends exist: cells of a finite index set (used for scenario-indexed
//! algebras) and half-open intervals inside `[-pi, pi)` (used for spectral
//! discretizations). Sets of the generated sigma-algebra that are not finite
//! unions of atoms are only ever handled as streams of algebra sets, see
//! [`approximate_countable_union`].

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use bitvec::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Construction(format!("interval [{lo}, {hi}) is empty or not finite")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> T {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) / T::lit(2.0)
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x < self.hi
    }

    /// Splits into `factor` equal pieces. The outer endpoints are reproduced exactly.
    fn split(&self, factor: usize) -> impl Iterator<Item = Interval<T>> + '_ {
        let width = self.hi - self.lo;
        let at = move |i: usize| {
            if i == factor {
                self.hi
            } else {
                self.lo + width * (T::from_count(i) / T::from_count(factor))
            }
        };
        (0..factor).map(move |i| Interval { lo: at(i), hi: at(i + 1) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atoms<T> {
    /// Cells partitioning `{0, .., ground_size - 1}`.
    Cells { ground_size: usize, cells: Vec<Vec<usize>> },
    /// Disjoint half-open intervals inside `[-pi, pi)`.
    Intervals(Vec<Interval<T>>),
}

/// Input to [`make_partition_algebra`].
#[derive(Debug, Clone, PartialEq)]
pub enum AtomSpec<T> {
    Cells { ground_size: usize, cells: Vec<Vec<usize>> },
    Intervals(Vec<(T, T)>),
    /// `2^level` equal intervals of `[-pi, pi)`.
    Dyadic(u32),
}

#[derive(Debug)]
struct AlgebraInner<T> {
    atoms: Atoms<T>,
    fingerprint: u64,
}

/// A finite partition algebra. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct AtomAlgebra<T>(Arc<AlgebraInner<T>>);

impl<T: PartialEq> PartialEq for AtomAlgebra<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.fingerprint == other.0.fingerprint && self.0.atoms == other.0.atoms)
    }
}

pub fn make_partition_algebra<T: Real>(spec: AtomSpec<T>) -> Result<AtomAlgebra<T>> {
    match spec {
        AtomSpec::Cells { ground_size, cells } => AtomAlgebra::from_cells(ground_size, cells),
        AtomSpec::Intervals(bounds) => AtomAlgebra::from_intervals(
            bounds.into_iter().map(|(lo, hi)| Interval::new(lo, hi)).collect::<Result<_>>()?,
        ),
        AtomSpec::Dyadic(level) => AtomAlgebra::dyadic(level),
    }
}

impl<T: Real> AtomAlgebra<T> {
    fn build(atoms: Atoms<T>) -> Self {
        let mut h = DefaultHasher::new();
        match &atoms {
            Atoms::Cells { ground_size, cells } => {
                0u8.hash(&mut h);
                ground_size.hash(&mut h);
                cells.hash(&mut h);
            }
            Atoms::Intervals(iv) => {
                1u8.hash(&mut h);
                for i in iv {
                    i.lo.as_f64().to_bits().hash(&mut h);
                    i.hi.as_f64().to_bits().hash(&mut h);
                }
            }
        }
        let fingerprint = h.finish();
        Self(Arc::new(AlgebraInner { atoms, fingerprint }))
    }

    /// Partition of `{0, .., ground_size - 1}` into the given cells.
    pub fn from_cells(ground_size: usize, cells: Vec<Vec<usize>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Construction("partition needs at least one cell".into()));
        }
        let mut seen = bitvec![0; ground_size];
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Construction(format!("cell {c} is empty")));
            }
            for &p in cell {
                if p >= ground_size {
                    return Err(Error::Construction(format!("cell {c} has point {p} outside ground set of size {ground_size}")));
                }
                if seen[p] {
                    return Err(Error::Construction(format!("point {p} appears in more than one cell")));
                }
                seen.set(p, true);
            }
        }
        if let Some(p) = seen.first_zero() {
            return Err(Error::Construction(format!("point {p} is not covered by any cell")));
        }
        Ok(Self::build(Atoms::Cells { ground_size, cells }))
    }

    /// One cell per point.
    pub fn discrete(ground_size: usize) -> Result<Self> {
        Self::from_cells(ground_size, (0..ground_size).map(|p| vec![p]).collect())
    }

    /// Disjoint intervals inside `[-pi, pi)`, kept in the given order.
    pub fn from_intervals(intervals: Vec<Interval<T>>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Construction("partition needs at least one interval".into()));
        }
        let pi = T::PI();
        for (j, iv) in intervals.iter().enumerate() {
            if !(iv.lo < iv.hi) {
                return Err(Error::Construction(format!("interval {j} is empty")));
            }
            if iv.lo < -pi || iv.hi > pi {
                return Err(Error::Construction(format!("interval {j} = [{}, {}) leaves [-pi, pi)", iv.lo, iv.hi)));
            }
        }
        let mut order: Vec<usize> = (0..intervals.len()).collect();
        order.sort_by(|a, b| intervals[*a].lo.partial_cmp(&intervals[*b].lo).expect("finite bounds"));
        for w in order.windows(2) {
            if intervals[w[0]].hi > intervals[w[1]].lo {
                return Err(Error::Construction(format!("intervals {} and {} overlap", w[0], w[1])));
            }
        }
        Ok(Self::build(Atoms::Intervals(intervals)))
    }

    /// `2^level` equal atoms of `[-pi, pi)`.
    pub fn dyadic(level: u32) -> Result<Self> {
        if level > 24 {
            return Err(Error::Argument(format!("dyadic level {level} too fine")));
        }
        let whole = Interval { lo: -T::PI(), hi: T::PI() };
        Ok(Self::build(Atoms::Intervals(whole.split(1 << level).collect())))
    }

    pub fn atoms(&self) -> &Atoms<T> {
        &self.0.atoms
    }

    pub fn atom_count(&self) -> usize {
        match &self.0.atoms {
            Atoms::Cells { cells, .. } => cells.len(),
            Atoms::Intervals(iv) => iv.len(),
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.0.fingerprint
    }

    pub fn intervals(&self) -> Option<&[Interval<T>]> {
        match &self.0.atoms {
            Atoms::Intervals(iv) => Some(iv),
            Atoms::Cells { .. } => None,
        }
    }

    /// Atom midpoints, for interval algebras.
    pub fn midpoints(&self) -> Option<Vec<T>> {
        self.intervals().map(|iv| iv.iter().map(Interval::midpoint).collect())
    }

    /// Number of sets in the generated algebra, `2^atoms`, when it fits.
    pub fn set_count(&self) -> Option<u128> {
        1u128.checked_shl(self.atom_count() as u32)
    }

    /// Every set of the algebra, in bitmask order. Limited to 24 atoms.
    pub fn enumerate_sets(&self) -> Result<impl Iterator<Item = AlgebraSet> + '_> {
        let n = self.atom_count();
        if n > 24 {
            return Err(Error::Unsupported(format!("enumerating 2^{n} sets")));
        }
        Ok((0u64..(1u64 << n)).map(move |mask| {
            let mut bits = bitvec![u64, Lsb0; 0; n];
            for j in 0..n {
                bits.set(j, mask >> j & 1 == 1);
            }
            AlgebraSet { fingerprint: self.fingerprint(), bits }
        }))
    }

    /// Atom containing the ground point `x`, for interval algebras.
    pub fn locate(&self, x: T) -> Option<usize> {
        self.intervals()?.iter().position(|iv| iv.contains(x))
    }

    pub fn empty_set(&self) -> AlgebraSet {
        AlgebraSet { fingerprint: self.fingerprint(), bits: bitvec![u64, Lsb0; 0; self.atom_count()] }
    }

    pub fn full_set(&self) -> AlgebraSet {
        AlgebraSet { fingerprint: self.fingerprint(), bits: bitvec![u64, Lsb0; 1; self.atom_count()] }
    }

    pub fn atom_set(&self, atom: usize) -> Result<AlgebraSet> {
        self.set_of([atom])
    }

    pub fn set_of(&self, atoms: impl IntoIterator<Item = usize>) -> Result<AlgebraSet> {
        let mut set = self.empty_set();
        let n = self.atom_count();
        for j in atoms {
            if j >= n {
                return Err(Error::Argument(format!("atom index {j} out of range for {n} atoms")));
            }
            set.bits.set(j, true);
        }
        Ok(set)
    }

    pub fn owns(&self, set: &AlgebraSet) -> bool {
        set.fingerprint == self.fingerprint() && set.bits.len() == self.atom_count()
    }

    pub(crate) fn check_owns(&self, set: &AlgebraSet) -> Result<()> {
        if self.owns(set) {
            Ok(())
        } else {
            Err(Error::AlgebraMismatch)
        }
    }
}

/// Splits every interval atom into `factor` equal subintervals.
///
/// Fine atom `a * factor + i` is the `i`-th piece of coarse atom `a`.
pub fn refine<T: Real>(algebra: &AtomAlgebra<T>, factor: usize) -> Result<(AtomAlgebra<T>, RefinementMap)> {
    if factor == 0 {
        return Err(Error::Argument("refinement factor must be positive".into()));
    }
    let intervals = algebra
        .intervals()
        .ok_or_else(|| Error::Unsupported("refining a non-interval algebra".into()))?;
    let map = RefinementMap::new(algebra.atom_count(), factor);
    if factor == 1 {
        return Ok((algebra.clone(), map));
    }
    let fine: Vec<Interval<T>> = intervals.iter().flat_map(|iv| iv.split(factor)).collect();
    Ok((AtomAlgebra::build(Atoms::Intervals(fine)), map))
}

/// Coarse-to-fine containment produced by [`refine`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementMap {
    coarse_atoms: usize,
    factor: usize,
}

impl RefinementMap {
    pub fn new(coarse_atoms: usize, factor: usize) -> Self {
        Self { coarse_atoms, factor }
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn coarse_atoms(&self) -> usize {
        self.coarse_atoms
    }

    pub fn fine_atoms(&self) -> usize {
        self.coarse_atoms * self.factor
    }

    pub fn parent(&self, fine: usize) -> usize {
        fine / self.factor
    }

    pub fn children(&self, coarse: usize) -> std::ops::Range<usize> {
        coarse * self.factor..(coarse + 1) * self.factor
    }

    /// The same set expressed in the fine algebra.
    pub fn lift_set<T: Real>(&self, fine: &AtomAlgebra<T>, coarse: &AlgebraSet) -> Result<AlgebraSet> {
        if coarse.bits.len() != self.coarse_atoms || fine.atom_count() != self.fine_atoms() {
            return Err(Error::AlgebraMismatch);
        }
        fine.set_of(coarse.atoms().flat_map(|a| self.children(a)))
    }
}

/// A set of the algebra, as a bitmask over atom indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlgebraSet {
    fingerprint: u64,
    bits: BitVec<u64, Lsb0>,
}

impl AlgebraSet {
    fn same_algebra(&self, other: &Self) -> Result<()> {
        if self.fingerprint == other.fingerprint && self.bits.len() == other.bits.len() {
            Ok(())
        } else {
            Err(Error::AlgebraMismatch)
        }
    }

    fn combine(&self, other: &Self, op: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.same_algebra(other)?;
        let bits = self.bits.iter().by_vals().zip(other.bits.iter().by_vals()).map(|(a, b)| op(a, b)).collect();
        Ok(Self { fingerprint: self.fingerprint, bits })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a | b)
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a & !b)
    }

    pub fn sym_diff(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a ^ b)
    }

    pub fn complement(&self) -> Self {
        Self { fingerprint: self.fingerprint, bits: !self.bits.clone() }
    }

    pub fn is_subset_of(&self, other: &Self) -> Result<bool> {
        Ok(self.difference(other)?.is_empty())
    }

    pub fn is_disjoint(&self, other: &Self) -> Result<bool> {
        Ok(self.intersect(other)?.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn contains_atom(&self, atom: usize) -> bool {
        self.bits.get(atom).map(|b| *b).unwrap_or(false)
    }

    /// Number of atoms in the set.
    pub fn len(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn atoms(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }
}

/// Finite union of half-open real intervals, kept sorted and merged.
///
/// Stands for sets of an interval algebra whose atoms are not fixed in
/// advance, e.g. the members of a refining family.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion<T> {
    pieces: Vec<Interval<T>>,
}

impl<T: Real> IntervalUnion<T> {
    pub fn empty() -> Self {
        Self { pieces: Vec::new() }
    }

    pub fn interval(lo: T, hi: T) -> Result<Self> {
        Ok(Self { pieces: vec![Interval::new(lo, hi)?] })
    }

    pub fn pieces(&self) -> &[Interval<T>] {
        &self.pieces
    }

    /// Lebesgue measure.
    pub fn length(&self) -> T {
        self.pieces.iter().map(Interval::len).sum()
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all: Vec<Interval<T>> = self.pieces.iter().chain(&other.pieces).copied().collect();
        all.sort_by(|a, b| a.lo.partial_cmp(&b.lo).expect("finite bounds"));
        let mut pieces: Vec<Interval<T>> = Vec::with_capacity(all.len());
        for iv in all {
            match pieces.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => pieces.push(iv),
            }
        }
        Self { pieces }
    }
}

/// Sets that can be accumulated into a finite union.
pub trait SetUnion: Sized {
    fn union_with(&self, other: &Self) -> Result<Self>;
}

impl SetUnion for AlgebraSet {
    fn union_with(&self, other: &Self) -> Result<Self> {
        self.union(other)
    }
}

impl<T: Real> SetUnion for IntervalUnion<T> {
    fn union_with(&self, other: &Self) -> Result<Self> {
        Ok(self.union(other))
    }
}

/// Result of truncating a countable disjoint union.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximation<S, T> {
    /// Union of the first `truncation` members.
    pub set: S,
    pub truncation: usize,
    /// Mass of the members after `truncation`, i.e. the mass of the symmetric
    /// difference between `set` and the full union.
    pub residual: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationOptions<T> {
    /// Mass of the whole union, when known. Without it the stream must end
    /// within `max_terms` so the tail can be summed.
    pub total_mass: Option<T>,
    pub max_terms: usize,
}

impl<T> Default for TruncationOptions<T> {
    fn default() -> Self {
        Self { total_mass: None, max_terms: 1 << 20 }
    }
}

/// Truncates a stream of disjoint sets `B_1, B_2, ..` at the smallest `N`
/// whose tail mass `sum_{n > N} mass(B_n)` is below `eps`, and returns
/// `A = B_1 ∪ .. ∪ B_N`.
pub fn approximate_countable_union<S, T, I, F>(
    empty: S,
    tail: I,
    mut mass: F,
    eps: T,
    options: TruncationOptions<T>,
) -> Result<Approximation<S, T>>
where
    S: SetUnion,
    T: Real,
    I: IntoIterator<Item = S>,
    F: FnMut(&S) -> T,
{
    if !(eps > T::zero()) {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    let mut checked_mass = |s: &S| -> Result<T> {
        let m = mass(s);
        if !(m >= T::zero()) || !m.is_finite() {
            return Err(Error::Argument(format!("set mass {m} is not a finite nonnegative number")));
        }
        Ok(m)
    };

    match options.total_mass {
        Some(total) => {
            let slack = T::epsilon() * T::lit(64.0) * total.abs().max(T::one());
            let mut set = empty;
            let mut prefix = T::zero();
            let mut stream = tail.into_iter();
            let mut n = 0usize;
            loop {
                let residual = total - prefix;
                if residual < -slack {
                    return Err(Error::Divergence { terms: n, partial: prefix.as_f64() });
                }
                if residual < eps {
                    return Ok(Approximation { set, truncation: n, residual: residual.max(T::zero()) });
                }
                if n >= options.max_terms {
                    return Err(Error::Divergence { terms: n, partial: prefix.as_f64() });
                }
                let Some(b) = stream.next() else {
                    return Err(Error::Argument(format!(
                        "stream ended after {n} sets with {residual} of the stated total mass unaccounted for"
                    )));
                };
                prefix += checked_mass(&b)?;
                set = set.union_with(&b)?;
                n += 1;
            }
        }
        None => {
            let mut members = Vec::new();
            let mut masses = Vec::new();
            for b in tail {
                if members.len() == options.max_terms {
                    let partial = masses.iter().copied().sum::<T>();
                    return Err(Error::Divergence { terms: members.len(), partial: partial.as_f64() });
                }
                masses.push(checked_mass(&b)?);
                members.push(b);
            }
            // suffix[n] = sum of masses after the first n members
            let mut suffix = vec![T::zero(); masses.len() + 1];
            for n in (0..masses.len()).rev() {
                suffix[n] = suffix[n + 1] + masses[n];
            }
            let truncation = suffix.iter().position(|s| *s < eps).expect("suffix ends at zero");
            let mut set = empty;
            for b in &members[..truncation] {
                set = set.union_with(b)?;
            }
            Ok(Approximation { set, truncation, residual: suffix[truncation] })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cells3() -> AtomAlgebra<f64> {
        AtomAlgebra::from_cells(3, vec![vec![0], vec![1], vec![2]]).unwrap()
    }

    #[test]
    fn three_cells_generate_eight_sets() {
        let a = cells3();
        assert_eq!(a.set_count(), Some(8));
        assert_eq!(a.enumerate_sets().unwrap().count(), 8);
    }

    #[test]
    fn dyadic_level_has_power_of_two_atoms() {
        let a = make_partition_algebra::<f64>(AtomSpec::Dyadic(5)).unwrap();
        assert_eq!(a.atom_count(), 32);
        let iv = a.intervals().unwrap();
        assert_eq!(iv[0].lo, -std::f64::consts::PI);
        assert_eq!(iv[31].hi, std::f64::consts::PI);
        for w in iv.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
    }

    #[test]
    fn overlapping_or_empty_cells_are_rejected() {
        assert!(AtomAlgebra::<f64>::from_cells(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(AtomAlgebra::<f64>::from_cells(3, vec![vec![0, 1, 2], vec![]]).is_err());
        assert!(AtomAlgebra::<f64>::from_cells(3, vec![vec![0, 1]]).is_err());
        assert!(make_partition_algebra(AtomSpec::Intervals(vec![(-1.0, 0.5), (0.0, 1.0)])).is_err());
        assert!(make_partition_algebra(AtomSpec::Intervals(vec![(-4.0, 0.0)])).is_err());
        assert!(make_partition_algebra(AtomSpec::Intervals(vec![(1.0, 1.0)])).is_err());
        assert!(make_partition_algebra(AtomSpec::Intervals(vec![(0.0, 1.0), (-1.0, 0.0)])).is_ok());
    }

    #[test]
    fn set_operations_basics() {
        let a = cells3();
        let x = a.set_of([0, 1]).unwrap();
        let y = a.set_of([1, 2]).unwrap();
        assert!(x.sym_diff(&x).unwrap().is_empty());
        assert_eq!(x.union(&y).unwrap(), a.full_set());
        assert_eq!(x.intersect(&y).unwrap(), a.atom_set(1).unwrap());
        assert_eq!(x.complement(), a.atom_set(2).unwrap());
        assert_eq!(x.sym_diff(&y).unwrap(), a.set_of([0, 2]).unwrap());
        assert!(a.set_of([3]).is_err());
    }

    #[test]
    fn sets_from_different_algebras_do_not_mix() {
        let a = cells3();
        let b = AtomAlgebra::<f64>::from_cells(3, vec![vec![0, 1], vec![2]]).unwrap();
        assert_eq!(a.full_set().union(&b.full_set()), Err(Error::AlgebraMismatch));
        assert!(!b.owns(&a.empty_set()));
    }

    #[test]
    fn refine_level_one_by_two_is_level_two() {
        let (fine, map) = refine(&AtomAlgebra::<f64>::dyadic(1).unwrap(), 2).unwrap();
        let direct = AtomAlgebra::<f64>::dyadic(2).unwrap();
        assert_eq!(fine.atom_count(), 4);
        assert_eq!(map.fine_atoms(), 4);
        for (x, y) in fine.intervals().unwrap().iter().zip(direct.intervals().unwrap()) {
            // pi is not a dyadic rational, so the two routes may differ in the last bit.
            assert!((x.lo - y.lo).abs() <= 4.0 * f64::EPSILON);
            assert!((x.hi - y.hi).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn refine_by_one_is_identity() {
        let a = AtomAlgebra::<f64>::dyadic(3).unwrap();
        let (same, map) = refine(&a, 1).unwrap();
        assert_eq!(same, a);
        assert_eq!(map.parent(5), 5);
    }

    #[test]
    fn refine_mapping_covers_each_fine_atom_once() {
        let a = make_partition_algebra(AtomSpec::Intervals(vec![(-1.0, 0.0), (0.5, 2.0)])).unwrap();
        let (fine, map) = refine(&a, 3).unwrap();
        let mut hits = vec![0; fine.atom_count()];
        for c in 0..a.atom_count() {
            for f in map.children(c) {
                hits[f] += 1;
                assert_eq!(map.parent(f), c);
                let (civ, fiv) = (a.intervals().unwrap()[c], fine.intervals().unwrap()[f]);
                assert!(civ.lo <= fiv.lo && fiv.hi <= civ.hi);
            }
        }
        assert!(hits.iter().all(|h| *h == 1));
        let lifted = map.lift_set(&fine, &a.atom_set(1).unwrap()).unwrap();
        assert_eq!(lifted.atoms().collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn refine_rejects_cells() {
        assert!(matches!(refine(&cells3(), 2), Err(Error::Unsupported(_))));
        assert!(refine(&AtomAlgebra::<f64>::dyadic(1).unwrap(), 0).is_err());
    }

    #[test]
    fn refine_preserves_total_length() {
        let a = make_partition_algebra(AtomSpec::Intervals(vec![(-3.0, -1.0), (0.1, 0.7), (1.0, 3.1)])).unwrap();
        let before: f64 = a.intervals().unwrap().iter().map(Interval::len).sum();
        for factor in [2, 3, 7, 64] {
            let (fine, _) = refine(&a, factor).unwrap();
            let after: f64 = fine.intervals().unwrap().iter().map(Interval::len).sum();
            assert!((before - after).abs() < 1e-12);
        }
    }

    fn geometric(n: i32) -> IntervalUnion<f64> {
        IntervalUnion::interval(2f64.powi(-(n + 1)), 2f64.powi(-n)).unwrap()
    }

    #[test]
    fn geometric_tail_truncation() {
        let opts = TruncationOptions { total_mass: Some(0.5), ..Default::default() };
        let approx =
            approximate_countable_union(IntervalUnion::empty(), (1..).map(geometric), |s| s.length(), 0.01, opts)
                .unwrap();
        assert_eq!(approx.truncation, 6);
        assert_eq!(approx.residual, 2f64.powi(-7));
        assert_eq!(approx.set, IntervalUnion::interval(2f64.powi(-7), 0.5).unwrap());
    }

    #[test]
    fn single_set_stream_and_vacuous_approximation() {
        let a = cells3();
        let masses = [0.2, 0.3, 0.5];
        let mass = |s: &AlgebraSet| s.atoms().map(|j| masses[j]).sum::<f64>();
        let one = approximate_countable_union(a.empty_set(), [a.set_of([0, 2]).unwrap()], mass, 1e-9, Default::default())
            .unwrap();
        assert_eq!(one.truncation, 1);
        assert_eq!(one.residual, 0.0);

        let vacuous =
            approximate_countable_union(a.empty_set(), [a.full_set()], mass, 2.0, Default::default()).unwrap();
        assert_eq!(vacuous.truncation, 0);
        assert!(vacuous.set.is_empty());
    }

    #[test]
    fn truncation_errors() {
        let a = cells3();
        let mass = |s: &AlgebraSet| s.len() as f64;
        assert!(matches!(
            approximate_countable_union(a.empty_set(), [a.full_set()], mass, 0.0, Default::default()),
            Err(Error::Argument(_))
        ));
        let harmonic = (1..).map(|n: i32| IntervalUnion::interval(n as f64, n as f64 + 1.0 / n as f64).unwrap());
        let opts = TruncationOptions { total_mass: None, max_terms: 1000 };
        assert!(matches!(
            approximate_countable_union(IntervalUnion::empty(), harmonic.clone(), |s| s.length(), 1e-3, opts),
            Err(Error::Divergence { terms: 1000, .. })
        ));
        let opts = TruncationOptions { total_mass: Some(3.0), max_terms: 1000 };
        assert!(matches!(
            approximate_countable_union(IntervalUnion::empty(), harmonic, |s| s.length(), 1e-3, opts),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn finite_targets_are_approximated_exactly() {
        let a = AtomAlgebra::<f64>::from_cells(5, (0..5).map(|p| vec![p]).collect()).unwrap();
        let masses = [0.1, 0.0, 0.4, 0.25, 0.25];
        let mass = |s: &AlgebraSet| s.atoms().map(|j| masses[j]).sum::<f64>();
        for target in a.enumerate_sets().unwrap() {
            let stream: Vec<_> = target.atoms().map(|j| a.atom_set(j).unwrap()).collect();
            let approx = approximate_countable_union(a.empty_set(), stream, mass, 1e-15, Default::default()).unwrap();
            assert_eq!(mass(&approx.set.sym_diff(&target).unwrap()), 0.0);
            assert_eq!(approx.residual, 0.0);
        }
    }

    fn arb_pair(n: usize) -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<bool>, Vec<bool>)> {
        let m = || proptest::collection::vec(any::<bool>(), n);
        (m(), m(), m(), m())
    }

    fn from_mask(a: &AtomAlgebra<f64>, mask: &[bool]) -> AlgebraSet {
        a.set_of(mask.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j)).unwrap()
    }

    proptest! {
        #[test]
        fn complement_preserves_symmetric_difference((x, y, _, _) in arb_pair(70)) {
            let a = AtomAlgebra::<f64>::discrete(70).unwrap();
            let (x, y) = (from_mask(&a, &x), from_mask(&a, &y));
            prop_assert_eq!(x.sym_diff(&y).unwrap(), x.complement().sym_diff(&y.complement()).unwrap());
        }

        #[test]
        fn union_of_differences_covers((a1, a2, b1, b2) in arb_pair(40)) {
            let a = AtomAlgebra::<f64>::discrete(40).unwrap();
            let (a1, a2, b1, b2) = (from_mask(&a, &a1), from_mask(&a, &a2), from_mask(&a, &b1), from_mask(&a, &b2));
            let lhs = a1.union(&a2).unwrap().sym_diff(&b1.union(&b2).unwrap()).unwrap();
            let rhs = a1.sym_diff(&b1).unwrap().union(&a2.sym_diff(&b2).unwrap()).unwrap();
            prop_assert!(lhs.is_subset_of(&rhs).unwrap());
        }

        #[test]
        fn sym_diff_commutes_and_associates((x, y, z, _) in arb_pair(33)) {
            let a = AtomAlgebra::<f64>::discrete(33).unwrap();
            let (x, y, z) = (from_mask(&a, &x), from_mask(&a, &y), from_mask(&a, &z));
            prop_assert_eq!(x.sym_diff(&y).unwrap(), y.sym_diff(&x).unwrap());
            prop_assert_eq!(
                x.sym_diff(&y).unwrap().sym_diff(&z).unwrap(),
                x.sym_diff(&y.sym_diff(&z).unwrap()).unwrap()
            );
        }
    }
}
