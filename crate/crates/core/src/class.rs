//! Locality classes: ordered bases of (grouped) Pauli strings spanning a
//! subspace of Hamiltonians, plus the discrete symmetry data used by the
//! equivalence checks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::PauliString;

/// Named families of locality classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum ClassKind {
    /// Every string of weight at most `k`.
    KLocal { k: usize },
    /// Identity, single-site terms and adjacent pairs on an open chain.
    NnChainOpen,
    /// As [`ClassKind::NnChainOpen`] with the extra bond `(n-1, 0)`.
    NnChainPeriodic,
    /// Translation-invariant nearest-neighbour chain with 12 grouped terms.
    TiChainPeriodic,
    /// The 9-term gauge slice of [`ClassKind::TiChainPeriodic`].
    TiChainGaugeFixed,
    /// Uniform open-chain couplings with free end-site fields (12 terms).
    BoundaryClass,
    /// Identity plus an explicit list of strings.
    Custom,
}

impl ClassKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassKind::KLocal { .. } => "k_local",
            ClassKind::NnChainOpen => "nn_chain_open",
            ClassKind::NnChainPeriodic => "nn_chain_periodic",
            ClassKind::TiChainPeriodic => "ti_chain_periodic",
            ClassKind::TiChainGaugeFixed => "ti_chain_gauge_fixed",
            ClassKind::BoundaryClass => "boundary_class",
            ClassKind::Custom => "custom",
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            ClassKind::KLocal { k } => Some(*k),
            _ => None,
        }
    }
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassKind::KLocal { k } => write!(f, "k_local({k})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Discrete symmetries the equivalence module may apply to members of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryDescriptor {
    /// Number of cyclic shifts that map the class to itself (1 = only the identity).
    pub translations: usize,
    pub reflection: bool,
    pub transpose: bool,
}

/// One basis direction: the unit-weight sum of its strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisOp {
    pub label: String,
    pub terms: Vec<PauliString>,
}

impl BasisOp {
    fn single(p: PauliString) -> Self {
        Self { label: p.to_string(), terms: vec![p] }
    }

    pub fn is_identity(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].is_identity()
    }
}

#[derive(Debug, Clone)]
pub struct LocalityClass {
    n: usize,
    d: usize,
    kind: ClassKind,
    basis: Vec<BasisOp>,
    symmetry: SymmetryDescriptor,
    lookup: HashMap<PauliString, Vec<usize>>,
    /// Basis elements have pairwise disjoint string sets.
    disjoint: bool,
}

impl PartialEq for LocalityClass {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.kind == other.kind && self.basis == other.basis
    }
}

/// Result of [`dim_local_space`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LocalDimension {
    /// Dimension of the space of operators with interactions among at most `k` sites.
    pub s: u128,
    /// Hilbert-space dimension `d^n`, `None` when it overflows `u128`.
    pub hilbert: Option<u128>,
    /// Whether `s < d^n`.
    pub below_hilbert: bool,
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// `s = sum_{j=0}^{k} C(n, j) (d^2 - 1)^j`, the dimension of the k-local operator space.
pub fn dim_local_space(n: usize, d: usize, k: usize) -> Result<LocalDimension> {
    if k > n {
        return Err(Error::InvalidClass(format!("k = {k} exceeds n = {n}")));
    }
    if d < 2 {
        return Err(Error::InvalidClass(format!("local dimension {d} < 2")));
    }
    let overflow = || Error::SizeCap(format!("dim_local_space({n}, {d}, {k}) overflows u128"));
    let per_site = (d as u128).pow(2) - 1;
    let mut s: u128 = 0;
    for j in 0..=k {
        let term = binomial(n as u128, j as u128)
            .and_then(|c| per_site.checked_pow(j as u32).and_then(|p| c.checked_mul(p)))
            .ok_or_else(overflow)?;
        s = s.checked_add(term).ok_or_else(overflow)?;
    }
    let hilbert = u32::try_from(n).ok().and_then(|e| (d as u128).checked_pow(e));
    let below_hilbert = hilbert.map_or(true, |h| s < h);
    Ok(LocalDimension { s, hilbert, below_hilbert })
}

/// Guard against enumerating absurdly large bases.
const MAX_BASIS: u128 = 5_000_000;

impl LocalityClass {
    fn from_parts(n: usize, kind: ClassKind, basis: Vec<BasisOp>, symmetry: SymmetryDescriptor) -> Self {
        let mut lookup: HashMap<PauliString, Vec<usize>> = HashMap::new();
        for (j, op) in basis.iter().enumerate() {
            for p in &op.terms {
                lookup.entry(*p).or_default().push(j);
            }
        }
        let disjoint = lookup.values().all(|v| v.len() == 1);
        Self { n, d: 2, kind, basis, symmetry, lookup, disjoint }
    }

    fn check_sites(n: usize, min: usize) -> Result<()> {
        if n < min {
            return Err(Error::InvalidClass(format!("need at least {min} sites, got {n}")));
        }
        if n > crate::pauli::MAX_STRING_SITES {
            return Err(Error::InvalidClass(format!("{n} sites exceeds the string limit")));
        }
        Ok(())
    }

    /// All strings of weight at most `k`, in canonical order.
    pub fn k_local(n: usize, k: usize) -> Result<Self> {
        Self::check_sites(n, 1)?;
        let dim = dim_local_space(n, 2, k)?;
        if dim.s > MAX_BASIS {
            return Err(Error::SizeCap(format!("k_local({n}, {k}) has {} elements", dim.s)));
        }
        let mut strings = vec![PauliString::identity(n)];
        let mut support = Vec::with_capacity(k);
        fn rec(n: usize, k: usize, start: usize, support: &mut Vec<usize>, out: &mut Vec<PauliString>) {
            if !support.is_empty() {
                let w = support.len();
                for code in 0..3usize.pow(w as u32) {
                    let mut c = code;
                    let entries: Vec<(usize, u8)> = support
                        .iter()
                        .map(|&s| {
                            let l = (c % 3) as u8 + 1;
                            c /= 3;
                            (s, l)
                        })
                        .collect();
                    out.push(PauliString::from_sparse(n, &entries));
                }
            }
            if support.len() == k {
                return;
            }
            for s in start..n {
                support.push(s);
                rec(n, k, s + 1, support, out);
                support.pop();
            }
        }
        rec(n, k, 0, &mut support, &mut strings);
        strings.sort();
        let basis = strings.into_iter().map(BasisOp::single).collect();
        Ok(Self::from_parts(
            n,
            ClassKind::KLocal { k },
            basis,
            SymmetryDescriptor { translations: n, reflection: true, transpose: true },
        ))
    }

    /// Identity, all 1-local strings and all adjacent pairs.
    pub fn nn_chain(n: usize, periodic: bool) -> Result<Self> {
        Self::check_sites(n, 2)?;
        if periodic && n < 3 {
            return Err(Error::InvalidClass("periodic chain needs n >= 3".into()));
        }
        let mut strings = vec![PauliString::identity(n)];
        for s in 0..n {
            for a in 1..=3 {
                strings.push(PauliString::from_sparse(n, &[(s, a)]));
            }
        }
        let bonds = if periodic { n } else { n - 1 };
        for i in 0..bonds {
            let j = (i + 1) % n;
            for a in 1..=3 {
                for b in 1..=3 {
                    strings.push(PauliString::from_sparse(n, &[(i, a), (j, b)]));
                }
            }
        }
        strings.sort();
        let basis = strings.into_iter().map(BasisOp::single).collect();
        let (kind, translations) =
            if periodic { (ClassKind::NnChainPeriodic, n) } else { (ClassKind::NnChainOpen, 1) };
        Ok(Self::from_parts(
            n,
            kind,
            basis,
            SymmetryDescriptor { translations, reflection: true, transpose: true },
        ))
    }

    /// Grouped translation-invariant terms `sum_i sigma^a_i sigma^b_{i+1}`,
    /// `a in 0..4`, `b in 1..4`, periodic. The gauge-fixed variant drops
    /// `(0,1)`, `(0,2)` and `(1,2)`.
    pub fn ti_chain(n: usize, gauge_fixed: bool) -> Result<Self> {
        Self::check_sites(n, 3)?;
        let mut basis = Vec::new();
        for (a, b) in ti_slots(gauge_fixed) {
            basis.push(BasisOp { label: format!("c{a}{b}"), terms: ti_group(n, a, b) });
        }
        let kind = if gauge_fixed { ClassKind::TiChainGaugeFixed } else { ClassKind::TiChainPeriodic };
        Ok(Self::from_parts(
            n,
            kind,
            basis,
            SymmetryDescriptor { translations: n, reflection: true, transpose: true },
        ))
    }

    /// `sum_{i<n} (a_p s^p_i s^p_{i+1} + b_p s^p_i) + c_p s^p_1 + d_p s^p_n`, ordered
    /// `a1..a3, b1..b3, c1..c3, d1..d3`.
    pub fn boundary(n: usize) -> Result<Self> {
        // At n = 2 the b_p and c_p directions coincide.
        Self::check_sites(n, 3)?;
        let mut basis = Vec::with_capacity(12);
        for p in 1..=3u8 {
            let terms = (0..n - 1).map(|i| PauliString::from_sparse(n, &[(i, p), (i + 1, p)])).collect();
            basis.push(BasisOp { label: format!("a{p}"), terms });
        }
        for p in 1..=3u8 {
            let terms = (0..n - 1).map(|i| PauliString::from_sparse(n, &[(i, p)])).collect();
            basis.push(BasisOp { label: format!("b{p}"), terms });
        }
        for p in 1..=3u8 {
            basis.push(BasisOp { label: format!("c{p}"), terms: vec![PauliString::from_sparse(n, &[(0, p)])] });
        }
        for p in 1..=3u8 {
            basis.push(BasisOp { label: format!("d{p}"), terms: vec![PauliString::from_sparse(n, &[(n - 1, p)])] });
        }
        Ok(Self::from_parts(
            n,
            ClassKind::BoundaryClass,
            basis,
            SymmetryDescriptor { translations: 1, reflection: true, transpose: true },
        ))
    }

    /// Identity plus the given strings, deduplicated and canonically ordered.
    pub fn custom(n: usize, strings: &[PauliString]) -> Result<Self> {
        Self::check_sites(n, 1)?;
        if let Some(p) = strings.iter().find(|p| p.n() != n) {
            return Err(Error::InvalidClass(format!("string {p} has {} sites, expected {n}", p.n())));
        }
        let mut all: Vec<PauliString> = strings.to_vec();
        all.push(PauliString::identity(n));
        all.sort();
        all.dedup();
        let basis = all.into_iter().map(BasisOp::single).collect();
        Ok(Self::from_parts(
            n,
            ClassKind::Custom,
            basis,
            SymmetryDescriptor { translations: 1, reflection: false, transpose: true },
        ))
    }

    /// Builds a named family. Names accept `-` or `_` separators.
    pub fn build(name: &str, n: usize, k: Option<usize>) -> Result<Self> {
        match name.replace('-', "_").as_str() {
            "k_local" => {
                let k = k.ok_or_else(|| Error::InvalidClass("k_local requires k".into()))?;
                Self::k_local(n, k)
            }
            "nn_chain_open" => Self::nn_chain(n, false),
            "nn_chain_periodic" => Self::nn_chain(n, true),
            "ti_chain_periodic" => Self::ti_chain(n, false),
            "ti_chain_gauge_fixed" => Self::ti_chain(n, true),
            "boundary_class" => Self::boundary(n),
            "custom" => Err(Error::InvalidClass("custom classes are built from explicit strings".into())),
            other => Err(Error::UnknownClass(other.to_string())),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BasisOp] {
        &self.basis
    }

    pub fn symmetry(&self) -> SymmetryDescriptor {
        self.symmetry
    }

    /// Basis elements whose string set contains `p`.
    pub fn elements_containing(&self, p: &PauliString) -> &[usize] {
        self.lookup.get(p).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn contains_string(&self, p: &PauliString) -> bool {
        self.lookup.contains_key(p)
    }

    /// Every distinct string used by the basis, in canonical order.
    pub fn strings(&self) -> Vec<PauliString> {
        let mut v: Vec<PauliString> = self.lookup.keys().copied().collect();
        v.sort();
        v
    }

    /// Class in which symmetry images of members are expressed. The gauge
    /// slice is not closed under reflection or rotations, so its images live
    /// in the full translation-invariant class.
    pub fn symmetry_closure(&self) -> Result<LocalityClass> {
        match self.kind {
            ClassKind::TiChainGaugeFixed => LocalityClass::ti_chain(self.n, false),
            _ => Ok(self.clone()),
        }
    }

    /// Least-squares coordinates of a Pauli expansion in this basis, together
    /// with the l2 norm (over Pauli coefficients) of the part left outside.
    pub fn project(&self, pauli: &BTreeMap<PauliString, Complex64>) -> (Vec<Complex64>, f64) {
        let s = self.dim();
        let mut rhs = vec![Complex64::new(0.0, 0.0); s];
        for (p, c) in pauli {
            for &j in self.elements_containing(p) {
                rhs[j] += *c;
            }
        }
        let coeffs: Vec<Complex64> = if self.disjoint {
            rhs.iter().zip(&self.basis).map(|(b, op)| b / op.terms.len() as f64).collect()
        } else {
            let gram = Mat::<f64>::from_fn(s, s, |i, j| {
                self.basis[i].terms.iter().filter(|p| self.lookup[p].contains(&j)).count() as f64
            });
            let rhs_m = Mat::<f64>::from_fn(s, 2, |i, c| if c == 0 { rhs[i].re } else { rhs[i].im });
            let sol = gram.partial_piv_lu().solve(&rhs_m);
            (0..s).map(|i| Complex64::new(sol[(i, 0)], sol[(i, 1)])).collect()
        };
        let mut recon: BTreeMap<PauliString, Complex64> = BTreeMap::new();
        for (c, op) in coeffs.iter().zip(&self.basis) {
            for p in &op.terms {
                *recon.entry(*p).or_default() += *c;
            }
        }
        let mut resid = 0.0;
        for (p, c) in pauli {
            let r = recon.remove(p).unwrap_or_default();
            resid += (c - r).norm_sqr();
        }
        resid += recon.values().map(|c| c.norm_sqr()).sum::<f64>();
        (coeffs, resid.sqrt())
    }
}

pub(crate) fn ti_slots(gauge_fixed: bool) -> Vec<(u8, u8)> {
    let mut v = Vec::with_capacity(12);
    for a in 0..4u8 {
        for b in 1..4u8 {
            if gauge_fixed && matches!((a, b), (0, 1) | (0, 2) | (1, 2)) {
                continue;
            }
            v.push((a, b));
        }
    }
    v
}

pub(crate) fn ti_group(n: usize, a: u8, b: u8) -> Vec<PauliString> {
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            if a == 0 {
                PauliString::from_sparse(n, &[(j, b)])
            } else {
                PauliString::from_sparse(n, &[(i, a), (j, b)])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_count(n: usize, k: usize) -> usize {
        (0..4usize.pow(n as u32))
            .filter(|&code| {
                let mut c = code;
                let mut w = 0;
                for _ in 0..n {
                    if c % 4 != 0 {
                        w += 1;
                    }
                    c /= 4;
                }
                w <= k
            })
            .count()
    }

    #[test]
    fn dimension_formula_examples() {
        let d = dim_local_space(10, 2, 2).unwrap();
        assert_eq!(d.s, 1 + 10 * 3 + 45 * 9);
        assert_eq!(d.s, 436);
        assert_eq!(d.hilbert, Some(1024));
        assert!(d.below_hilbert);
        assert_eq!(dim_local_space(7, 2, 0).unwrap().s, 1);
        assert_eq!(dim_local_space(2, 2, 2).unwrap().s, 16);
        assert!(!dim_local_space(2, 2, 2).unwrap().below_hilbert);
        assert_eq!(dim_local_space(3, 3, 1).unwrap().s, 1 + 3 * 8);
        assert!(dim_local_space(3, 2, 4).is_err());
    }

    #[test]
    fn dimension_formula_matches_enumeration() {
        for n in 1..=6 {
            for k in 0..=n {
                let s = dim_local_space(n, 2, k).unwrap().s as usize;
                assert_eq!(s, brute_count(n, k), "n={n} k={k}");
                assert_eq!(LocalityClass::k_local(n, k).unwrap().dim(), s);
            }
        }
    }

    #[test]
    fn k_local_basis_is_canonical_and_distinct() {
        let c = LocalityClass::k_local(10, 2).unwrap();
        assert_eq!(c.dim(), 436);
        assert!(c.basis()[0].is_identity());
        let strings: Vec<PauliString> = c.basis().iter().map(|b| b.terms[0]).collect();
        assert!(strings.windows(2).all(|w| w[0] < w[1]));
        assert!(strings.iter().all(|p| p.weight() <= 2));
        assert_eq!(LocalityClass::k_local(2, 2).unwrap().dim(), 16);
        assert!(LocalityClass::k_local(2, 3).is_err());
    }

    #[test]
    fn open_chain_adjacency() {
        let c = LocalityClass::nn_chain(3, false).unwrap();
        assert!(c.contains_string(&PauliString::parse("XXI").unwrap()));
        assert!(!c.contains_string(&PauliString::parse("XIX").unwrap()));
        assert_eq!(c.dim(), 1 + 9 + 18);
        let p = LocalityClass::nn_chain(3, true).unwrap();
        assert!(p.contains_string(&PauliString::parse("XIX").unwrap()));
    }

    #[test]
    fn grouped_classes() {
        let ti = LocalityClass::ti_chain(5, false).unwrap();
        assert_eq!(ti.dim(), 12);
        assert!(ti.disjoint);
        let gf = LocalityClass::ti_chain(5, true).unwrap();
        assert_eq!(gf.dim(), 9);
        let labels: Vec<&str> = gf.basis().iter().map(|b| b.label.as_str()).collect();
        assert!(!labels.contains(&"c01") && !labels.contains(&"c02") && !labels.contains(&"c12"));
        let b = LocalityClass::boundary(6).unwrap();
        assert_eq!(b.dim(), 12);
        assert!(!b.disjoint);
        assert!(LocalityClass::boundary(2).is_err());
    }

    #[test]
    fn projection_recovers_grouped_coefficients() {
        let b = LocalityClass::boundary(5).unwrap();
        let coeffs: Vec<Complex64> = (0..12).map(|i| Complex64::new(i as f64 - 3.5, 0.25 * i as f64)).collect();
        let mut pauli = BTreeMap::new();
        for (c, op) in coeffs.iter().zip(b.basis()) {
            for p in &op.terms {
                *pauli.entry(*p).or_insert(Complex64::new(0.0, 0.0)) += *c;
            }
        }
        let (back, resid) = b.project(&pauli);
        assert!(resid < 1e-12);
        for (x, y) in back.iter().zip(&coeffs) {
            assert!((x - y).norm() < 1e-12);
        }
        pauli.insert(PauliString::parse("XIXII").unwrap(), Complex64::new(2.0, 0.0));
        let (_, resid) = b.project(&pauli);
        assert!((resid - 2.0).abs() < 1e-12);
    }

    #[test]
    fn build_by_name() {
        assert_eq!(LocalityClass::build("k-local", 4, Some(2)).unwrap().dim(), 1 + 12 + 54);
        assert!(matches!(LocalityClass::build("nope", 4, None), Err(Error::UnknownClass(_))));
        assert!(LocalityClass::build("k_local", 4, None).is_err());
    }
}
