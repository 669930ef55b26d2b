//! Eigen-decompositions, spectra as sorted multisets, and the matching-based
//! spectral distance.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd;
use faer::{Mat, Par};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};

/// Pairs with a reciprocal condition estimate below this are treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e-8;

/// Relative Hermiticity residual accepted by [`eigh`].
pub const HERMITIAN_TOL: f64 = 1e-10;

fn lex_cmp(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Sorted eigenvalue multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<Complex64>,
    hermitian: bool,
}

impl Spectrum {
    /// Sorts the values. Hermitian spectra must be real to `1e-12 * scale`;
    /// their imaginary parts are then cleared.
    pub fn new(mut values: Vec<Complex64>, hermitian: bool) -> Result<Self> {
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Format("non-finite eigenvalue".into()));
        }
        if hermitian {
            let scale = values.iter().map(|v| v.norm()).fold(1.0, f64::max);
            if let Some(v) = values.iter().find(|v| v.im.abs() > 1e-12 * scale) {
                return Err(Error::Precondition(format!("Hermitian spectrum has complex value {v}")));
            }
            values.iter_mut().for_each(|v| v.im = 0.0);
        }
        values.sort_by(lex_cmp);
        Ok(Self { values, hermitian })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), true)
    }

    pub fn from_eigensystem(es: &EigenSystem) -> Self {
        let mut values = es.values.clone();
        if es.hermitian {
            values.iter_mut().for_each(|v| v.im = 0.0);
        }
        values.sort_by(lex_cmp);
        Self { values, hermitian: es.hermitian }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max(1, max |lambda|)`, the reference for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(1.0, f64::max)
    }

    pub fn trace(&self) -> Complex64 {
        self.values.iter().sum()
    }

    fn all_real(&self) -> bool {
        self.hermitian || self.values.iter().all(|v| v.im == 0.0)
    }

    /// Smallest gap between neighbouring sorted values (`inf` for N < 2).
    pub fn min_gap(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Eigenvalues with right and left eigenvectors stored as matrix columns.
///
/// For the general solver the left vectors satisfy `w_i^H A = lambda_i w_i^H`
/// and both families are normalized to unit length, so `condition[i] =
/// |w_i^H v_i|` is the reciprocal eigenvalue condition number.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<Complex64>,
    pub right: Mat<Complex64>,
    pub left: Mat<Complex64>,
    pub condition: Vec<f64>,
    pub hermitian: bool,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// First pair whose condition estimate falls below `threshold`.
    pub fn first_defective(&self, threshold: f64) -> Option<(usize, f64)> {
        self.condition.iter().copied().enumerate().find(|&(_, c)| c < threshold)
    }

    pub fn is_near_defective(&self) -> bool {
        self.first_defective(DEFECTIVE_CONDITION).is_some()
    }

    /// `max_i ||A v_i - lambda_i v_i||`.
    pub fn max_residual(&self, a: &Mat<Complex64>) -> f64 {
        let av = a * &self.right;
        (0..self.dim())
            .map(|i| {
                let lam = self.values[i];
                (0..self.dim()).map(|r| (av[(r, i)] - self.right[(r, i)] * lam).norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

fn check_square(a: &Mat<Complex64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    if a.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Format(format!("non-finite entry at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// `||A - A^H||_F / max(||A||_F, tiny)`.
pub fn hermiticity_residual(a: &Mat<Complex64>) -> f64 {
    let n = a.nrows();
    let mut diff = 0.0;
    for j in 0..n {
        for i in 0..n {
            diff += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
        }
    }
    let norm = a.norm_l2();
    if norm == 0.0 {
        0.0
    } else {
        diff.sqrt() / norm
    }
}

/// Hermitian eigendecomposition: ascending real values, orthonormal vectors.
pub fn eigh(a: &Mat<Complex64>) -> Result<EigenSystem> {
    check_square(a)?;
    let herm = hermiticity_residual(a);
    if herm > HERMITIAN_TOL {
        return Err(Error::NotHermitian(herm));
    }
    let n = a.nrows();
    let par = Par::Seq;
    let mut s = faer::diag::Diag::<Complex64>::zeros(n);
    let mut right = Mat::<Complex64>::zeros(n, n);
    let scratch =
        evd::self_adjoint_evd_scratch::<Complex64>(n, evd::ComputeEigenvectors::Yes, par, Default::default());
    evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        Some(right.as_mut()),
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence)?;
    let values: Vec<Complex64> = (0..n).map(|i| Complex64::new(s[i].re, 0.0)).collect();
    Ok(EigenSystem { values, left: right.clone(), right, condition: vec![1.0; n], hermitian: true })
}

/// General complex eigendecomposition with left and right vectors, sorted
/// lexicographically by `(Re, Im)`.
pub fn eig_general(a: &Mat<Complex64>) -> Result<EigenSystem> {
    check_square(a)?;
    let n = a.nrows();
    let par = Par::Seq;
    let mut s = faer::diag::Diag::<Complex64>::zeros(n);
    let mut ul = Mat::<Complex64>::zeros(n, n);
    let mut ur = Mat::<Complex64>::zeros(n, n);
    let scratch = evd::evd_scratch::<Complex64>(
        n,
        evd::ComputeEigenvectors::Yes,
        evd::ComputeEigenvectors::Yes,
        par,
        Default::default(),
    );
    evd::evd_cplx(
        a.as_ref(),
        s.as_mut(),
        Some(ul.as_mut()),
        Some(ur.as_mut()),
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence)?;

    let raw: Vec<Complex64> = (0..n).map(|i| s[i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lex_cmp(&raw[i], &raw[j]));

    let mut right = Mat::<Complex64>::zeros(n, n);
    let mut left = Mat::<Complex64>::zeros(n, n);
    let mut condition = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let rn = ur.col(src).norm_l2();
        let ln = ul.col(src).norm_l2();
        let mut overlap = Complex64::new(0.0, 0.0);
        for r in 0..n {
            right[(r, dst)] = ur[(r, src)] / rn;
            left[(r, dst)] = ul[(r, src)] / ln;
            overlap += left[(r, dst)].conj() * right[(r, dst)];
        }
        condition.push(overlap.norm());
    }
    let values = order.iter().map(|&i| raw[i]).collect();
    Ok(EigenSystem { values, right, left, condition, hermitian: false })
}

/// Singular values of a real matrix in descending order.
pub fn singular_values(a: faer::MatRef<'_, f64>) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(Vec::new());
    }
    if a.col_iter().any(|c| c.iter().any(|x| !x.is_finite())) {
        return Err(Error::Precondition("matrix has non-finite entries".into()));
    }
    let par = Par::Seq;
    let mut s = faer::diag::Diag::<f64>::zeros(k);
    let scratch = faer::linalg::svd::svd_scratch::<f64>(
        m,
        n,
        faer::linalg::svd::ComputeSvdVectors::No,
        faer::linalg::svd::ComputeSvdVectors::No,
        par,
        Default::default(),
    );
    faer::linalg::svd::svd(
        a,
        s.as_mut(),
        None,
        None,
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence)?;
    let mut out: Vec<f64> = (0..k).map(|i| s[i].abs()).collect();
    out.sort_by(|x, y| y.total_cmp(x));
    Ok(out)
}

/// Optimal pairing between two equal-length value lists under squared
/// distance: returns `perm` with `a[perm[k]]` matched to `b[k]`, and the
/// total squared cost.
pub fn optimal_matching(a: &[Complex64], b: &[Complex64]) -> Result<(Vec<usize>, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    let n = a.len();
    let all_real = a.iter().chain(b).all(|v| v.im == 0.0);
    if all_real {
        // Sorted pairing is optimal for a convex cost on the line.
        let mut ia: Vec<usize> = (0..n).collect();
        let mut ib: Vec<usize> = (0..n).collect();
        ia.sort_by(|&i, &j| a[i].re.total_cmp(&a[j].re));
        ib.sort_by(|&i, &j| b[i].re.total_cmp(&b[j].re));
        let mut perm = vec![0; n];
        let mut cost = 0.0;
        for (x, y) in ia.iter().zip(&ib) {
            perm[*y] = *x;
            cost += (a[*x].re - b[*y].re).powi(2);
        }
        return Ok((perm, cost));
    }
    let mut costs = Vec::with_capacity(n * n);
    for bk in b {
        for aj in a {
            costs.push((aj - bk).norm_sqr());
        }
    }
    // rows index b, columns index a
    let (assign, cost) = min_cost_assignment(&costs, n);
    Ok((assign, cost))
}

/// `sqrt(min_pi sum_k |A_k - B_pi(k)|^2)` over bijections.
pub fn spectral_distance(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("spectra of size {} and {}", a.len(), b.len())));
    }
    if a.all_real() && b.all_real() {
        // both stored sorted
        let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x.re - y.re).powi(2)).sum();
        return Ok(s.sqrt());
    }
    Ok(optimal_matching(&a.values, &b.values)?.1.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegeneracyProfile {
    /// Cluster sizes in sorted-value order.
    pub sizes: Vec<usize>,
    pub max_multiplicity: usize,
}

/// Groups sorted values whose consecutive gaps are below `tol * scale`.
pub fn degeneracy_profile(s: &Spectrum, tol: f64) -> DegeneracyProfile {
    let cut = tol * s.scale();
    let mut sizes = Vec::new();
    let mut run = 0usize;
    for (i, v) in s.values.iter().enumerate() {
        if i > 0 && (v - s.values[i - 1]).norm() >= cut {
            sizes.push(run);
            run = 0;
        }
        run += 1;
    }
    if run > 0 {
        sizes.push(run);
    }
    let max_multiplicity = sizes.iter().copied().max().unwrap_or(0);
    DegeneracyProfile { sizes, max_multiplicity }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::LocalityClass;
    use crate::models::build_ising;
    use crate::operator::OperatorExpr;
    use faer::linalg::solvers::DenseSolveCore;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mat(rows: &[&[Complex64]]) -> Mat<Complex64> {
        Mat::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Mat<Complex64> {
        Mat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn eigh_diagonal_and_pauli_x() {
        let es = eigh(&mat(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(-1.0, 0.0)]])).unwrap();
        assert_eq!(es.values, vec![c(-1.0, 0.0), c(1.0, 0.0)]);
        assert!((es.right[(1, 0)].norm() - 1.0).abs() < 1e-14);

        let es = eigh(&mat(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]])).unwrap();
        assert!((es.values[0] - c(-1.0, 0.0)).norm() < 1e-14);
        let v = es.right.col(0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(((v[0] / v[1]) - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((v[0].norm() - r).abs() < 1e-12);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let a = mat(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!(matches!(eigh(&a), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn eigh_residual_on_ising() {
        let h = build_ising(4, 1.0, 0.7, true).unwrap().dense().unwrap();
        let es = eigh(&h).unwrap();
        assert!(es.max_residual(&h) < 1e-10 * h.norm_l2());
        let gram = es.right.adjoint() * &es.right;
        for i in 0..16 {
            for j in 0..16 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - c(e, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn jordan_block_is_flagged() {
        let es = eig_general(&mat(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]])).unwrap();
        assert!(es.values.iter().all(|v| v.norm() < 1e-12));
        assert!(es.is_near_defective());
    }

    #[test]
    fn companion_two_by_two() {
        let es = eig_general(&mat(&[&[c(0.0, 0.0), c(4.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]])).unwrap();
        assert!((es.values[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((es.values[1] - c(2.0, 0.0)).norm() < 1e-12);
        assert!(!es.is_near_defective());
    }

    #[test]
    fn general_solver_trace_and_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let class = Arc::new(LocalityClass::ti_chain(4, true).unwrap());
        let coeffs = (0..class.dim()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let h = OperatorExpr::new(class, coeffs).unwrap().dense().unwrap();
        let es = eig_general(&h).unwrap();
        let tr: Complex64 = (0..16).map(|i| h[(i, i)]).sum();
        let sum: Complex64 = es.values.iter().sum();
        let scale = es.values.iter().map(|v| v.norm()).fold(1.0, f64::max);
        assert!((tr - sum).norm() < 1e-10 * scale);
        assert!(es.max_residual(&h) < 1e-9 * h.norm_l2());
        // left vectors
        let wa = es.left.adjoint() * &h;
        for i in 0..16 {
            for r in 0..16 {
                assert!((wa[(i, r)] - es.left[(r, i)].conj() * es.values[i]).norm() < 1e-9 * h.norm_l2());
            }
        }
    }

    #[test]
    fn biorthogonality_for_separated_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 12);
        let es = eig_general(&a).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                if i != j && (es.values[i] - es.values[j]).norm() > 1e-3 {
                    let dot: Complex64 = (0..12).map(|r| es.left[(r, i)].conj() * es.right[(r, j)]).sum();
                    assert!(dot.norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn distance_examples() {
        let a = Spectrum::from_real(&[3.0, 1.0, 2.0]).unwrap();
        let b = Spectrum::from_real(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(spectral_distance(&a, &b).unwrap(), 0.0);
        let a = Spectrum::from_real(&[0.0, 0.0]).unwrap();
        let b = Spectrum::from_real(&[0.0, 1.0]).unwrap();
        assert_eq!(spectral_distance(&a, &b).unwrap(), 1.0);
        assert!(spectral_distance(&a, &Spectrum::from_real(&[1.0]).unwrap()).is_err());
    }

    #[test]
    fn matching_agrees_with_exhaustive_permutations() {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=7 {
            for _ in 0..5 {
                let a: Vec<Complex64> = (0..n).map(|_| c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
                let b: Vec<Complex64> = (0..n).map(|_| c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
                let best = perms(n)
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(k, &j)| (a[j] - b[k]).norm_sqr()).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                let d = spectral_distance(&Spectrum::new(a, false).unwrap(), &Spectrum::new(b, false).unwrap()).unwrap();
                assert!((d * d - best).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degeneracy_examples() {
        let s = Spectrum::from_real(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(degeneracy_profile(&s, 1e-8).sizes, vec![2, 1]);
        let class = Arc::new(LocalityClass::k_local(3, 1).unwrap());
        let mut coeffs = vec![0.0; class.dim()];
        for (j, op) in class.basis().iter().enumerate() {
            if op.terms[0].weight() == 1 && op.terms[0].letter(op.terms[0].support()[0]) == 1 {
                coeffs[j] = 1.0;
            }
        }
        let h = OperatorExpr::from_real(class, &coeffs).unwrap().dense().unwrap();
        let spec = Spectrum::from_eigensystem(&eigh(&h).unwrap());
        let prof = degeneracy_profile(&spec, 1e-8);
        assert_eq!(prof.sizes, vec![1, 3, 3, 1]);
        assert_eq!(prof.max_multiplicity, 3);
    }

    fn random_spectrum(rng: &mut ChaCha8Rng, n: usize) -> Spectrum {
        Spectrum::new((0..n).map(|_| c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect(), false).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn distance_is_a_metric(seed in any::<u64>(), n in 1usize..=64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spectrum(&mut rng, n);
            let b = random_spectrum(&mut rng, n);
            let c3 = random_spectrum(&mut rng, n);
            let ab = spectral_distance(&a, &b).unwrap();
            let ba = spectral_distance(&b, &a).unwrap();
            let bc = spectral_distance(&b, &c3).unwrap();
            let ac = spectral_distance(&a, &c3).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-9 * (1.0 + ab));
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!(spectral_distance(&a, &a).unwrap() < 1e-12);
        }

        #[test]
        fn conjugation_invariance(seed in any::<u64>(), n in 2usize..=24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n);
            // Hermitian part, conjugated by a random unitary (QR of a random matrix).
            let h = Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
            let q = random_matrix(&mut rng, n).qr().compute_Q();
            let hc = &q * &h * q.adjoint();
            let hc = Mat::from_fn(n, n, |i, j| (hc[(i, j)] + hc[(j, i)].conj()) * 0.5);
            let s1 = Spectrum::from_eigensystem(&eigh(&h).unwrap());
            let s2 = Spectrum::from_eigensystem(&eigh(&hc).unwrap());
            prop_assert!(spectral_distance(&s1, &s2).unwrap() < 1e-8 * h.norm_l2().max(1.0));
            // General matrix under an invertible similarity.
            let g = Mat::from_fn(n, n, |i, j| if i == j { c(2.0, 0.0) } else { c(0.0, 0.0) }) + random_matrix(&mut rng, n) * faer::Scale(c(0.3, 0.0));
            let ginv = g.partial_piv_lu().inverse();
            let ac = &g * &a * &ginv;
            let t1 = Spectrum::from_eigensystem(&eig_general(&a).unwrap());
            let t2 = Spectrum::from_eigensystem(&eig_general(&ac).unwrap());
            prop_assert!(spectral_distance(&t1, &t2).unwrap() < 1e-8 * a.norm_l2().max(1.0));
        }
    }
}
