//! Equivalence under the trivial-duality group: the same single-site
//! conjugation on every site, cyclic shifts, reflection of the chain, and
//! transposition.
//!
//! The continuous part is searched at the level of Pauli coefficients through
//! the induced 3x3 action; every accepted witness is replayed on dense
//! matrices before it is reported.

use std::collections::HashMap;

use faer::Mat;
use faer::linalg::solvers::Solve;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{chain_permutation, conjugate_dense, exp_su2, induced_rotation, permute_dense, Mat3};
use crate::json::{complex3, derive_seed};
use crate::operator::{OperatorExpr, PauliSum};
use crate::pauli::PauliString;
use crate::spectra::{eig_general, eigh, spectral_distance, Spectrum};

pub const EQUIV_FORMAT: &str = "tps-spectra/equiv.v1";
pub const DEFAULT_STARTS: usize = 20;
pub const PROBE_STARTS: usize = 200;
pub const DEFAULT_ACCEPT_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Shift by `shift` sites, then mirror if `reflect`; `transpose` commutes with both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteElement {
    pub shift: usize,
    pub reflect: bool,
    pub transpose: bool,
}

impl DiscreteElement {
    pub const IDENTITY: DiscreteElement = DiscreteElement { shift: 0, reflect: false, transpose: false };

    pub fn label(&self) -> String {
        let mut parts = vec![format!("shift={}", self.shift)];
        if self.reflect {
            parts.push("reflect".into());
        }
        if self.transpose {
            parts.push("transpose".into());
        }
        parts.join(",")
    }

    pub fn apply(&self, sum: &PauliSum) -> PauliSum {
        let base = if self.transpose { sum.transpose() } else { sum.clone() };
        if self.shift == 0 && !self.reflect {
            return base;
        }
        base.permute_sites(&chain_permutation(sum.n(), self.shift, self.reflect))
    }

    pub fn apply_dense(&self, a: &Mat<Complex64>, n: usize) -> Mat<Complex64> {
        let base = if self.transpose { a.transpose().to_owned() } else { a.clone() };
        if self.shift == 0 && !self.reflect {
            return base;
        }
        permute_dense(&base, &chain_permutation(n, self.shift, self.reflect))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymmetryElement {
    Shift { t: usize },
    Reflect,
    Transpose,
    UniformConjugation {
        #[serde(with = "complex3")]
        theta: [Complex64; 3],
    },
}

impl SymmetryElement {
    pub fn label(&self) -> String {
        match self {
            SymmetryElement::Shift { t } => format!("shift({t})"),
            SymmetryElement::Reflect => "reflect".into(),
            SymmetryElement::Transpose => "transpose".into(),
            SymmetryElement::UniformConjugation { .. } => "uniform_conjugation".into(),
        }
    }
}

/// Applies one group element and re-expresses the result in the input's class.
pub fn apply_symmetry(expr: &OperatorExpr, element: &SymmetryElement) -> Result<OperatorExpr> {
    let class = expr.class();
    let sym = class.symmetry();
    let incompatible =
        || Error::IncompatibleSymmetry { element: element.label(), class: class.kind().to_string() };
    let n = expr.n();
    let sum = expr.pauli_sum();
    let out = match element {
        SymmetryElement::Shift { t } => {
            if t % n != 0 && sym.translations != n {
                return Err(incompatible());
            }
            sum.permute_sites(&chain_permutation(n, t % n, false))
        }
        SymmetryElement::Reflect => {
            if !sym.reflection {
                return Err(incompatible());
            }
            sum.permute_sites(&chain_permutation(n, 0, true))
        }
        SymmetryElement::Transpose => {
            if !sym.transpose {
                return Err(incompatible());
            }
            sum.transpose()
        }
        SymmetryElement::UniformConjugation { theta } => sum.conjugate_uniform(&induced_rotation(&exp_su2(theta))?),
    };
    OperatorExpr::from_pauli_sum(expr.class_arc().clone(), &out, 1e-10).map_err(|_| incompatible())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    /// `SU(2)` on every site; induced action in `SO(3)`, 3 real parameters.
    Unitary,
    /// `SL(2, C)` on every site (scalars act trivially); 6 real parameters.
    Complexified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceOptions {
    pub group: GroupKind,
    pub starts: usize,
    pub accept_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        Self { group: GroupKind::Unitary, starts: DEFAULT_STARTS, accept_tol: DEFAULT_ACCEPT_TOL, max_iter: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub element: DiscreteElement,
    /// `B = g (element . A) g^{-1}` on every site with `g = exp(-i/2 theta . sigma)`.
    #[serde(with = "complex3")]
    pub theta: [Complex64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub element: String,
    pub best_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Equivalent,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub format: String,
    pub verdict: VerdictKind,
    /// Best relative residual `||g(e.A)g^{-1} - B|| / ||B||`.
    pub residual: f64,
    /// `false` for `not_found`: a failed search does not prove inequivalence.
    pub conclusive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_residual: Option<f64>,
    pub attempts: Vec<Attempt>,
}

/// Discrete elements allowed by the class, in canonical order.
pub fn discrete_elements(expr: &OperatorExpr) -> Vec<DiscreteElement> {
    let sym = expr.class().symmetry();
    let mut out = Vec::new();
    for transpose in [false, true] {
        if transpose && !sym.transpose {
            continue;
        }
        for reflect in [false, true] {
            if reflect && !sym.reflection {
                continue;
            }
            for shift in 0..sym.translations.max(1) {
                out.push(DiscreteElement { shift, reflect, transpose });
            }
        }
    }
    out
}

/// Residual map `theta -> coefficients of g A g^{-1} - B` on a fixed key set.
struct ConjugationProblem {
    /// Per term: coefficient, letters on its support, key index per lettering code.
    terms: Vec<(Complex64, Vec<usize>, Vec<usize>)>,
    target: Vec<Complex64>,
    target_norm: f64,
    complexified: bool,
}

impl ConjugationProblem {
    fn new(a: &PauliSum, b: &PauliSum, complexified: bool) -> Self {
        let n = a.n();
        let mut keys: HashMap<PauliString, usize> = HashMap::new();
        let key = |p: PauliString, keys: &mut HashMap<PauliString, usize>| {
            let next = keys.len();
            *keys.entry(p).or_insert(next)
        };
        let mut terms = Vec::new();
        for (p, c) in a.iter() {
            let support = p.support();
            let letters: Vec<usize> = support.iter().map(|&s| p.letter(s) as usize - 1).collect();
            let w = support.len();
            let mut idx = Vec::with_capacity(3usize.pow(w as u32));
            for code in 0..3usize.pow(w as u32) {
                let mut rem = code;
                let entries: Vec<(usize, u8)> = support
                    .iter()
                    .map(|&s| {
                        let l = rem % 3;
                        rem /= 3;
                        (s, l as u8 + 1)
                    })
                    .collect();
                idx.push(key(PauliString::from_sparse(n, &entries), &mut keys));
            }
            terms.push((*c, letters, idx));
        }
        for (p, _) in b.iter() {
            key(*p, &mut keys);
        }
        let mut target = vec![ZERO; keys.len()];
        for (p, c) in b.iter() {
            target[keys[p]] = *c;
        }
        Self { terms, target, target_norm: b.norm(), complexified }
    }

    fn dim(&self) -> usize {
        if self.complexified {
            6
        } else {
            3
        }
    }

    fn theta(&self, x: &[f64]) -> [Complex64; 3] {
        if self.complexified {
            [Complex64::new(x[0], x[3]), Complex64::new(x[1], x[4]), Complex64::new(x[2], x[5])]
        } else {
            [Complex64::new(x[0], 0.0), Complex64::new(x[1], 0.0), Complex64::new(x[2], 0.0)]
        }
    }

    /// Real residual vector `(re, im)` interleaved.
    fn residual(&self, x: &[f64]) -> Option<Vec<f64>> {
        let rot = induced_rotation(&exp_su2(&self.theta(x))).ok()?;
        Some(self.residual_for(&rot))
    }

    fn residual_for(&self, rot: &Mat3) -> Vec<f64> {
        let mut acc: Vec<Complex64> = self.target.iter().map(|t| -t).collect();
        for (c, letters, idx) in &self.terms {
            let w = letters.len();
            for (code, &k) in idx.iter().enumerate() {
                let mut rem = code;
                let mut amp = *c;
                for &a in letters.iter().take(w) {
                    let b = rem % 3;
                    rem /= 3;
                    amp *= rot[b][a];
                }
                acc[k] += amp;
            }
        }
        acc.iter().flat_map(|v| [v.re, v.im]).collect()
    }

    fn relative(&self, r: &[f64]) -> f64 {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if self.target_norm > 0.0 {
            norm / self.target_norm
        } else {
            norm
        }
    }

    /// Levenberg-Marquardt from `x0` with central-difference Jacobians.
    fn descend(&self, x0: Vec<f64>, max_iter: usize, goal: f64) -> (Vec<f64>, f64) {
        let m = self.dim();
        let mut x = x0;
        let Some(mut r) = self.residual(&x) else {
            return (x, f64::INFINITY);
        };
        let mut cost: f64 = r.iter().map(|v| v * v).sum();
        let mut mu = 1e-3;
        for _ in 0..max_iter {
            if self.relative(&r) < goal {
                break;
            }
            let h = 1e-6;
            let mut jac = Mat::<f64>::zeros(r.len(), m);
            let mut ok = true;
            for j in 0..m {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                match (self.residual(&xp), self.residual(&xm)) {
                    (Some(rp), Some(rm)) => {
                        for i in 0..r.len() {
                            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                        }
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                break;
            }
            let jt = jac.transpose();
            let a = jt * &jac;
            let rv = Mat::<f64>::from_fn(r.len(), 1, |i, _| r[i]);
            let g = jt * &rv;
            let mut improved = false;
            for _ in 0..40 {
                let damped = Mat::<f64>::from_fn(m, m, |i, j| {
                    if i == j {
                        a[(i, j)] + mu * a[(i, i)].max(1e-12)
                    } else {
                        a[(i, j)]
                    }
                });
                let step = damped.partial_piv_lu().solve(&g);
                let xn: Vec<f64> = (0..m).map(|i| x[i] - step[(i, 0)]).collect();
                if let Some(rn) = self.residual(&xn) {
                    let cn: f64 = rn.iter().map(|v| v * v).sum();
                    if cn.is_finite() && cn < cost {
                        x = xn;
                        r = rn;
                        cost = cn;
                        mu = (mu / 3.0).max(1e-12);
                        improved = true;
                        break;
                    }
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        let rel = self.relative(&r);
        (x, rel)
    }
}

fn random_start(rng: &mut ChaCha8Rng, complexified: bool) -> Vec<f64> {
    // Uniform axis, angle in [0, pi]: every rotation is reachable.
    let axis: [f64; 3] = loop {
        let v: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-8 {
            break v.map(|x| x / norm);
        }
    };
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    let mut x: Vec<f64> = axis.iter().map(|a| a * angle).collect();
    if complexified {
        for _ in 0..3 {
            let v: f64 = StandardNormal.sample(rng);
            x.push(0.5 * v);
        }
    }
    x
}

fn dense_residual(a: &OperatorExpr, b: &OperatorExpr, w: &Witness) -> Result<f64> {
    let n = a.n();
    let ae = w.element.apply_dense(&a.dense()?, n);
    let conj = conjugate_dense(&ae, &exp_su2(&w.theta), n)?;
    let bd = b.dense()?;
    let norm = bd.norm_l2();
    let diff = (&conj - &bd).norm_l2();
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

struct ElementResult {
    best: f64,
    accepted: Option<(Witness, f64)>,
}

/// Searches the group for `g` and a discrete element with
/// `g (element . A) g^{-1} = B`.
pub fn decide_equivalent(a: &OperatorExpr, b: &OperatorExpr, opts: &EquivalenceOptions) -> Result<EquivalenceVerdict> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!("{} vs {} sites", a.n(), b.n())));
    }
    if a.class() != b.class() {
        return Err(Error::Precondition(format!(
            "operators belong to different classes ({} vs {})",
            a.class().name(),
            b.class().name()
        )));
    }
    let complexified = opts.group == GroupKind::Complexified;
    let elements = discrete_elements(a);
    let sum_a = a.pauli_sum();
    let sum_b = b.pauli_sum();
    let results: Vec<Result<ElementResult>> = elements
        .par_iter()
        .enumerate()
        .map(|(ei, e)| {
            let problem = ConjugationProblem::new(&e.apply(&sum_a), &sum_b, complexified);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[ei as u64]));
            let mut best = f64::INFINITY;
            for s in 0..opts.starts.max(1) {
                let x0 = if s == 0 { vec![0.0; problem.dim()] } else { random_start(&mut rng, complexified) };
                let (x, rel) = problem.descend(x0, opts.max_iter, opts.accept_tol * 1e-4);
                best = best.min(rel);
                if rel < opts.accept_tol {
                    let witness = Witness { element: *e, theta: problem.theta(&x) };
                    let dense = dense_residual(a, b, &witness)?;
                    if dense < opts.accept_tol {
                        return Ok(ElementResult { best, accepted: Some((witness, dense)) });
                    }
                }
            }
            Ok(ElementResult { best, accepted: None })
        })
        .collect();
    let mut attempts = Vec::with_capacity(elements.len());
    let mut accepted = None;
    for (e, r) in elements.iter().zip(results) {
        let r = r?;
        attempts.push(Attempt { element: e.label(), best_residual: r.best });
        if accepted.is_none() {
            if let Some(acc) = r.accepted {
                accepted = Some((acc, r.best));
            }
        }
    }
    let best = attempts.iter().map(|a| a.best_residual).fold(f64::INFINITY, f64::min);
    Ok(match accepted {
        Some(((witness, dense), residual)) => EquivalenceVerdict {
            format: EQUIV_FORMAT.into(),
            verdict: VerdictKind::Equivalent,
            residual,
            conclusive: true,
            witness: Some(witness),
            dense_residual: Some(dense),
            attempts,
        },
        None => EquivalenceVerdict {
            format: EQUIV_FORMAT.into(),
            verdict: VerdictKind::NotFound,
            residual: best,
            conclusive: false,
            witness: None,
            dense_residual: None,
            attempts,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub spectral_distance: f64,
    pub scale: f64,
    /// No witness found despite the elevated start count.
    pub probable_dual: bool,
    pub equivalence: EquivalenceVerdict,
}

/// Spectrum through `eigh` for Hermitian operators, the general solver otherwise.
pub fn spectrum_of(expr: &OperatorExpr) -> Result<Spectrum> {
    let dense = expr.dense()?;
    let es = if expr.is_hermitian(1e-12) { eigh(&dense)? } else { eig_general(&dense)? };
    Ok(Spectrum::from_eigensystem(&es))
}

/// Equivalence search with an elevated start count on an isospectral pair.
pub fn isospectral_inequivalence_probe(
    a: &OperatorExpr,
    b: &OperatorExpr,
    opts: &EquivalenceOptions,
) -> Result<ProbeReport> {
    let sa = spectrum_of(a)?;
    let sb = spectrum_of(b)?;
    let dist = spectral_distance(&sa, &sb)?;
    let scale = sa.scale().max(sb.scale());
    if dist >= 1e-8 * scale {
        return Err(Error::Precondition(format!("spectra differ (distance {dist:.3e}, scale {scale:.3e})")));
    }
    let equivalence = decide_equivalent(a, b, opts)?;
    Ok(ProbeReport {
        spectral_distance: dist,
        scale,
        probable_dual: equivalence.verdict == VerdictKind::NotFound,
        equivalence,
    })
}
