//! Finite-dual certificates: the diagonal-expectation matrix `M`, numerical
//! rank with a gap certificate, the single-site commutant, and brute-force
//! kernel oracles for small systems.

use std::collections::BTreeMap;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class::LocalityClass;
use crate::error::{Error, Result};
use crate::operator::{OperatorExpr, PauliSum};
use crate::pauli::PauliString;
use crate::spectra::{eigh, singular_values, EigenSystem, Spectrum};

pub const CERT_FORMAT: &str = "tps-spectra/cert.v1";
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const GAP_THRESHOLD: f64 = 1e3;
/// Smallest level spacing, relative to the spectral scale, treated as distinct.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;
pub const BRUTE_FORCE_MAX_SITES: usize = 4;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Unbounded ratios travel as `null`.
pub(crate) mod ratio {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankInfo {
    pub rank: usize,
    /// `sigma_rank / sigma_{rank+1}`; infinite when nothing lies below the cut.
    #[serde(with = "ratio")]
    pub gap_ratio: f64,
    pub singular_values: Vec<f64>,
}

/// `rank = #{sigma_i > rel_tol * sigma_max}`.
pub fn numerical_rank(a: faer::MatRef<'_, f64>, rel_tol: f64) -> Result<RankInfo> {
    Ok(rank_from_singular_values(singular_values(a)?, rel_tol))
}

fn rank_from_singular_values(sv: Vec<f64>, rel_tol: f64) -> RankInfo {
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = if max > 0.0 { sv.iter().filter(|&&s| s > rel_tol * max).count() } else { 0 };
    let gap_ratio = if rank == 0 || rank == sv.len() || sv[rank] == 0.0 {
        f64::INFINITY
    } else {
        sv[rank - 1] / sv[rank]
    };
    RankInfo { rank, gap_ratio, singular_values: sv }
}

fn check_membership(h0: &OperatorExpr, class: &LocalityClass) -> Result<()> {
    if h0.n() != class.n() {
        return Err(Error::DimensionMismatch(format!("operator on {} sites, class on {}", h0.n(), class.n())));
    }
    if h0.class() == class {
        return Ok(());
    }
    let sum = h0.pauli_sum();
    let (_, resid) = class.project(sum.terms());
    if resid > 1e-10 * sum.norm() {
        return Err(Error::NotInClass {
            class: class.kind().to_string(),
            detail: format!("projection residual {resid:.3e}"),
        });
    }
    Ok(())
}

fn relative_min_gap(spec: &Spectrum) -> f64 {
    spec.min_gap() / spec.scale()
}

fn expectation_matrix(class: &LocalityClass, es: &EigenSystem) -> Mat<f64> {
    let rows: Vec<Vec<f64>> = (0..es.dim())
        .into_par_iter()
        .map(|i| {
            let v = es.right.col(i).try_as_col_major().expect("owned columns are contiguous").as_slice();
            class.basis().iter().map(|op| op.terms.iter().map(|p| p.sandwich(v, v).re).sum()).collect()
        })
        .collect();
    Mat::from_fn(es.dim(), class.dim(), |i, j| rows[i][j])
}

/// `M_ij = <E_i| L_j |E_i>` over the eigenbasis of `h0`. Refuses degenerate
/// spectra.
pub fn build_m(h0: &OperatorExpr, class: &LocalityClass) -> Result<Mat<f64>> {
    build_m_with_tol(h0, class, DEFAULT_DEGENERACY_TOL)
}

pub fn build_m_with_tol(h0: &OperatorExpr, class: &LocalityClass, degeneracy_tol: f64) -> Result<Mat<f64>> {
    check_membership(h0, class)?;
    let es = eigh(&h0.dense()?)?;
    let spec = Spectrum::from_eigensystem(&es);
    let gap = relative_min_gap(&spec);
    if gap < degeneracy_tol {
        return Err(Error::DegenerateSpectrum(format!(
            "smallest level spacing {gap:.3e} (relative) is below {degeneracy_tol:.1e}"
        )));
    }
    Ok(expectation_matrix(class, &es))
}

/// Dense real matrix assembled from `(row key, column, value)` entries with
/// unused row keys dropped.
struct Triplets {
    cols: usize,
    rows: BTreeMap<(usize, usize), usize>,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    fn new(cols: usize) -> Self {
        Self { cols, rows: BTreeMap::new(), entries: Vec::new() }
    }

    fn push(&mut self, key: (usize, usize), col: usize, val: f64) {
        if val == 0.0 {
            return;
        }
        let next = self.rows.len();
        let row = *self.rows.entry(key).or_insert(next);
        self.entries.push((row, col, val));
    }

    fn push_complex(&mut self, key: usize, col: usize, val: Complex64) {
        self.push((key, 0), col, val.re);
        self.push((key, 1), col, val.im);
    }

    fn into_mat(self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.rows.len(), self.cols);
        for (r, c, v) in self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

fn string_index(p: &PauliString) -> usize {
    ((p.x_mask() as usize) << p.n()) | p.z_mask() as usize
}

/// Part of a Pauli expansion orthogonal to the real span of the class.
fn complement(class: &LocalityClass, sum: &PauliSum) -> PauliSum {
    let (coeffs, _) = class.project(sum.terms());
    let mut out = sum.clone();
    for (c, op) in coeffs.iter().zip(class.basis()) {
        for p in &op.terms {
            out.add(*p, -c);
        }
    }
    out
}

fn single_site_generators(n: usize) -> Vec<PauliString> {
    (0..n).flat_map(|s| (1..=3u8).map(move |l| PauliString::from_sparse(n, &[(s, l)]))).collect()
}

/// Dimension of the span of `{identity} + single-site operators` commuting
/// with `h0`.
pub fn commutant_1local_dim(h0: &OperatorExpr) -> Result<usize> {
    let sum = h0.pauli_sum();
    let gens = single_site_generators(h0.n());
    let mut t = Triplets::new(gens.len());
    for (a, g) in gens.iter().enumerate() {
        let c = PauliSum::from_terms(h0.n(), [(*g, Complex64::new(1.0, 0.0))]).commutator(&sum);
        for (p, v) in c.iter() {
            t.push_complex(string_index(p), a, *v);
        }
    }
    let info = numerical_rank(t.into_mat().as_ref(), DEFAULT_RANK_TOL)?;
    Ok(gens.len() + 1 - info.rank)
}

fn all_strings(n: usize) -> Vec<PauliString> {
    let mut out = Vec::with_capacity(1 << (2 * n));
    for x in 0..(1u64 << n) {
        for z in 0..(1u64 << n) {
            let letters: Vec<u8> = (0..n)
                .map(|s| {
                    let bit = n - 1 - s;
                    let (xb, zb) = ((x >> bit) & 1, (z >> bit) & 1);
                    match (xb, zb) {
                        (0, 0) => 0,
                        (1, 0) => 1,
                        (1, 1) => 2,
                        _ => 3,
                    }
                })
                .collect();
            out.push(PauliString::from_letters(&letters).expect("valid letters"));
        }
    }
    out
}

fn brute_force_cap(n: usize) -> Result<()> {
    if n > BRUTE_FORCE_MAX_SITES {
        return Err(Error::SizeCap(format!("brute-force kernels need n <= {BRUTE_FORCE_MAX_SITES}, got {n}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDim {
    pub dim: usize,
    #[serde(with = "ratio")]
    pub gap_ratio: f64,
}

/// `dim ker (V -> Proj_{S^perp} i[V, h0])` over all Hermitian `V`.
pub fn brute_force_ker_fh(h0: &OperatorExpr, class: &LocalityClass) -> Result<KernelDim> {
    brute_force_cap(h0.n())?;
    if h0.n() != class.n() {
        return Err(Error::DimensionMismatch(format!("operator on {} sites, class on {}", h0.n(), class.n())));
    }
    let n = h0.n();
    let sum = h0.pauli_sum();
    let basis = all_strings(n);
    let mut t = Triplets::new(basis.len());
    for (a, p) in basis.iter().enumerate() {
        let c = PauliSum::from_terms(n, [(*p, I)]).commutator(&sum);
        for (q, v) in complement(class, &c).iter() {
            t.push_complex(string_index(q), a, *v);
        }
    }
    let info = numerical_rank(t.into_mat().as_ref(), DEFAULT_RANK_TOL)?;
    Ok(KernelDim { dim: basis.len() - info.rank, gap_ratio: info.gap_ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub n: usize,
    pub k: usize,
    pub dim_found: usize,
    pub dim_expected: usize,
    /// The class is the whole operator space and the statement is vacuous.
    pub full_space: bool,
    #[serde(with = "ratio")]
    pub gap_ratio: f64,
}

/// Dimension of `{V Hermitian : Proj_{S^perp} i[V, L_j] = 0 for all j}` with
/// `S = k_local(n, k)`, against the single-site count `3n + 1`.
pub fn verify_locality_lemma(n: usize, k: usize) -> Result<LemmaReport> {
    brute_force_cap(n)?;
    let class = LocalityClass::k_local(n, k)?;
    let basis = all_strings(n);
    let block = 2 * basis.len();
    let mut t = Triplets::new(basis.len());
    for (a, p) in basis.iter().enumerate() {
        let v = PauliSum::from_terms(n, [(*p, I)]);
        for (j, op) in class.basis().iter().enumerate() {
            let l = PauliSum::from_terms(n, op.terms.iter().map(|q| (*q, Complex64::new(1.0, 0.0))));
            for (q, c) in complement(&class, &v.commutator(&l)).iter() {
                t.push_complex(j * block + string_index(q), a, *c);
            }
        }
    }
    let info = numerical_rank(t.into_mat().as_ref(), DEFAULT_RANK_TOL)?;
    Ok(LemmaReport {
        n,
        k,
        dim_found: basis.len() - info.rank,
        dim_expected: 3 * n + 1,
        full_space: class.dim() == basis.len(),
        gap_ratio: info.gap_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub rank_tol: f64,
    pub gap_threshold: f64,
    pub degeneracy_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { rank_tol: DEFAULT_RANK_TOL, gap_threshold: GAP_THRESHOLD, degeneracy_tol: DEFAULT_DEGENERACY_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub format: String,
    pub class_name: String,
    pub n: usize,
    pub s: usize,
    #[serde(rename = "N")]
    pub hilbert_dim: usize,
    #[serde(rename = "dim_ker_M")]
    pub dim_ker_m: usize,
    pub expected: usize,
    pub singular_values: Vec<f64>,
    #[serde(with = "ratio")]
    pub gap_ratio: f64,
    pub rank_tol: f64,
    pub spectrum_nondegenerate: bool,
    pub min_gap_relative: f64,
    pub commutant_1local_dim: usize,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

/// Kernel-dimension certificate that `h0` has finitely many isospectral
/// partners in `class`. Degenerate inputs are reported with raw dimensions
/// and an ambiguous verdict.
pub fn certify_finite_duals(h0: &OperatorExpr, class: &LocalityClass, opts: &CertifyOptions) -> Result<CertificateReport> {
    check_membership(h0, class)?;
    let es = eigh(&h0.dense()?)?;
    let spec = Spectrum::from_eigensystem(&es);
    let min_gap_relative = relative_min_gap(&spec);
    let nondegenerate = min_gap_relative >= opts.degeneracy_tol;
    let commutant = commutant_1local_dim(h0)?;
    let m = expectation_matrix(class, &es);
    let info = numerical_rank(m.as_ref(), opts.rank_tol)?;
    let dim_ker_m = class.dim() - info.rank;
    let expected = (3 * h0.n() + 1).saturating_sub(commutant);
    let clean = nondegenerate && commutant == 1 && info.gap_ratio >= opts.gap_threshold;
    let verdict = if clean && dim_ker_m == expected {
        Verdict::Pass
    } else if clean {
        Verdict::Fail
    } else {
        Verdict::Ambiguous
    };
    Ok(CertificateReport {
        format: CERT_FORMAT.to_string(),
        class_name: class.name().to_string(),
        n: h0.n(),
        s: class.dim(),
        hilbert_dim: es.dim(),
        dim_ker_m,
        expected,
        singular_values: info.singular_values,
        gap_ratio: info.gap_ratio,
        rank_tol: opts.rank_tol,
        spectrum_nondegenerate: nondegenerate,
        min_gap_relative,
        commutant_1local_dim: commutant,
        verdict,
        seed: None,
        elapsed_ms: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn random_in(class: LocalityClass, seed: u64) -> OperatorExpr {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let class = Arc::new(class);
        let coeffs: Vec<f64> = class
            .basis()
            .iter()
            .map(|op| if op.is_identity() { 0.0 } else { StandardNormal.sample(&mut rng) })
            .collect();
        OperatorExpr::from_real(class, &coeffs).unwrap()
    }

    fn single(n: usize, label: &str, c: f64) -> OperatorExpr {
        let p = PauliString::parse(label).unwrap();
        let class = Arc::new(LocalityClass::custom(n, &[p]).unwrap());
        let sum = PauliSum::from_terms(n, [(p, Complex64::new(c, 0.0))]);
        OperatorExpr::from_pauli_sum(class, &sum, 1e-12).unwrap()
    }

    #[test]
    fn rank_examples() {
        let z = Mat::<f64>::zeros(4, 3);
        let r = numerical_rank(z.as_ref(), 1e-8).unwrap();
        assert_eq!(r.rank, 0);
        let id = Mat::<f64>::identity(5, 5);
        let r = numerical_rank(id.as_ref(), 1e-8).unwrap();
        assert_eq!((r.rank, r.gap_ratio), (5, f64::INFINITY));
        let d = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { [1.0, 1e-3, 1e-12][i] } else { 0.0 });
        let r = numerical_rank(d.as_ref(), 1e-8).unwrap();
        assert_eq!(r.rank, 2);
        assert!((r.gap_ratio - 1e9).abs() < 1e-3);
        let empty = Mat::<f64>::zeros(0, 4);
        assert_eq!(numerical_rank(empty.as_ref(), 1e-8).unwrap().rank, 0);
    }

    #[test]
    fn ratio_serializes_infinity_as_null() {
        let info = RankInfo { rank: 1, gap_ratio: f64::INFINITY, singular_values: vec![1.0] };
        let text = serde_json::to_string(&info).unwrap();
        assert!(text.contains("\"gap_ratio\":null"));
        let back: RankInfo = serde_json::from_str(&text).unwrap();
        assert_eq!(back, info);
    }

    #[test]
    fn single_qubit_z() {
        let h = single(1, "Z", 1.0);
        let full = LocalityClass::k_local(1, 1).unwrap();
        let m = build_m(&h, &full).unwrap();
        // basis order: I, X, Y, Z; eigenvectors |1> (E=-1) then |0> (E=+1)
        let expect = [[1.0, 0.0, 0.0, -1.0], [1.0, 0.0, 0.0, 1.0]];
        for i in 0..2 {
            for j in 0..4 {
                assert!((m[(i, j)] - expect[i][j]).abs() < 1e-12);
            }
        }
        let rep = certify_finite_duals(&h, &full, &CertifyOptions::default()).unwrap();
        assert_eq!(rep.dim_ker_m, 2);
        assert_eq!(rep.commutant_1local_dim, 2);
        assert_eq!(rep.expected, 2);
        assert_eq!(rep.verdict, Verdict::Ambiguous);
    }

    #[test]
    fn identity_column_is_all_ones() {
        let h = random_in(LocalityClass::k_local(3, 2).unwrap(), 5);
        let m = build_m(&h, h.class()).unwrap();
        assert!(h.class().basis()[0].is_identity());
        for i in 0..m.nrows() {
            assert!((m[(i, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_spectrum_is_refused() {
        let n = 3;
        let class = Arc::new(LocalityClass::k_local(n, 1).unwrap());
        let mut sum = PauliSum::new(n);
        for s in 0..n {
            sum.add(PauliString::from_sparse(n, &[(s, 1)]), Complex64::new(1.0, 0.0));
        }
        let h = OperatorExpr::from_pauli_sum(class.clone(), &sum, 1e-12).unwrap();
        assert!(matches!(build_m(&h, &class), Err(Error::DegenerateSpectrum(_))));
        let rep = certify_finite_duals(&h, &class, &CertifyOptions::default()).unwrap();
        assert!(!rep.spectrum_nondegenerate);
        assert!(rep.commutant_1local_dim > 1);
        assert_eq!(rep.verdict, Verdict::Ambiguous);
    }

    #[test]
    fn commutant_examples() {
        let h = random_in(LocalityClass::k_local(3, 2).unwrap(), 9);
        assert_eq!(commutant_1local_dim(&h).unwrap(), 1);
        assert_eq!(commutant_1local_dim(&single(2, "ZZ", 1.0)).unwrap(), 3);
        let zero = OperatorExpr::zeros(Arc::new(LocalityClass::k_local(3, 2).unwrap()));
        assert_eq!(commutant_1local_dim(&zero).unwrap(), 10);
    }

    #[test]
    fn brute_force_trivial_cases() {
        let class = LocalityClass::k_local(2, 2).unwrap();
        let h = random_in(LocalityClass::k_local(2, 2).unwrap(), 3);
        assert_eq!(brute_force_ker_fh(&h, &class).unwrap().dim, 16);
        let zero = OperatorExpr::zeros(Arc::new(LocalityClass::k_local(3, 1).unwrap()));
        assert_eq!(brute_force_ker_fh(&zero, zero.class()).unwrap().dim, 64);
        let big = OperatorExpr::zeros(Arc::new(LocalityClass::k_local(5, 1).unwrap()));
        assert!(matches!(brute_force_ker_fh(&big, big.class()), Err(Error::SizeCap(_))));
    }

    #[test]
    fn kernel_oracle_identity() {
        let mut seed = 100;
        for n in [2usize, 3] {
            for class in [
                LocalityClass::k_local(n, 1).unwrap(),
                LocalityClass::k_local(n, 2).unwrap(),
                LocalityClass::nn_chain(n, false).unwrap(),
            ] {
                seed += 1;
                let h = random_in(class.clone(), seed);
                let m = build_m(&h, &class).unwrap();
                let info = numerical_rank(m.as_ref(), DEFAULT_RANK_TOL).unwrap();
                let ker_m = class.dim() - info.rank;
                let brute = brute_force_ker_fh(&h, &class).unwrap();
                assert_eq!(brute.dim, ker_m + (1 << n), "n={n} class={}", class.name());
            }
        }
    }

    #[test]
    fn generic_certificate_passes_at_eight_sites() {
        // Below 8 sites s - 2^n already exceeds 3n, so the kernel is too large.
        for (n, seed) in [(8usize, 1u64)] {
            let class = LocalityClass::k_local(n, 2).unwrap();
            let h = random_in(class.clone(), seed);
            let rep = certify_finite_duals(&h, &class, &CertifyOptions::default()).unwrap();
            assert_eq!(rep.dim_ker_m, 3 * n, "n={n}");
            assert_eq!(rep.verdict, Verdict::Pass);
        }
    }

    #[test]
    fn single_site_commutators_lie_in_kernel() {
        let n = 4;
        let class = Arc::new(LocalityClass::k_local(n, 2).unwrap());
        let h = random_in((*class).clone(), 77);
        let m = build_m(&h, &class).unwrap();
        let mnorm = m.norm_l2();
        for g in single_site_generators(n) {
            let c = PauliSum::from_terms(n, [(g, I)]).commutator(&h.pauli_sum());
            let v = OperatorExpr::from_pauli_sum(class.clone(), &c, 1e-12).unwrap();
            let vec = Mat::<f64>::from_fn(class.dim(), 1, |j, _| v.coeffs()[j].re);
            let prod = &m * &vec;
            assert!(prod.norm_l2() <= 1e-8 * mnorm * vec.norm_l2());
        }
    }

    #[test]
    fn lemma_small_cases() {
        for (n, k) in [(3, 2), (3, 1), (2, 1)] {
            let r = verify_locality_lemma(n, k).unwrap();
            assert_eq!(r.dim_found, r.dim_expected, "n={n} k={k}");
            assert!(!r.full_space);
        }
        let r = verify_locality_lemma(2, 2).unwrap();
        assert!(r.full_space);
        assert_eq!(r.dim_found, 16);
    }

    #[test]
    fn certificate_is_deterministic_and_scale_invariant() {
        let class = LocalityClass::k_local(4, 2).unwrap();
        let h = random_in(class.clone(), 21);
        let a = certify_finite_duals(&h, &class, &CertifyOptions::default()).unwrap();
        let b = certify_finite_duals(&h, &class, &CertifyOptions::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = certify_finite_duals(&h.scaled(37.5), &class, &CertifyOptions::default()).unwrap();
        assert_eq!((a.verdict, a.dim_ker_m, a.commutant_1local_dim), (c.verdict, c.dim_ker_m, c.commutant_1local_dim));
    }
}
