//! Inverse-eigenvalue search for isospectral partners inside a class:
//! spectrum-matching residuals, eigenvalue Jacobians, damped Gauss-Newton
//! descent from random starts, and classification of the minima found.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class::{ClassKind, LocalityClass};
use crate::equivalence::{decide_equivalent, spectrum_of, EquivalenceOptions, GroupKind, VerdictKind, Witness};
use crate::error::{Error, Result};
use crate::group::{exp_su2, induced_rotation, mul2, mul3, real3_to_complex, rodrigues, Mat2, Mat3};
use crate::json::{complex_vec, derive_seed, digest_complex};
use crate::models::{sample_hamiltonian, TICoefficients};
use crate::operator::OperatorExpr;
use crate::spectra::{eig_general, eigh, optimal_matching, spectral_distance, EigenSystem, Spectrum, DEFECTIVE_CONDITION};

pub const SEARCH_FORMAT: &str = "tps-spectra/search.v1";
pub const BATCH_FORMAT: &str = "tps-spectra/batch.v1";

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Coefficient space of a class, real or complexified.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    class: Arc<LocalityClass>,
    complexified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceInfo {
    pub class_name: String,
    pub n: usize,
    pub complexified: bool,
    pub parameter_dim: usize,
}

impl SearchSpace {
    pub fn new(class: Arc<LocalityClass>, complexified: bool) -> Self {
        Self { class, complexified }
    }

    /// The 9-coefficient translation-invariant slice.
    pub fn ti_gauge_fixed(n: usize, complexified: bool) -> Result<Self> {
        Ok(Self::new(Arc::new(LocalityClass::ti_chain(n, true)?), complexified))
    }

    pub fn class(&self) -> &Arc<LocalityClass> {
        &self.class
    }

    pub fn complexified(&self) -> bool {
        self.complexified
    }

    pub fn n(&self) -> usize {
        self.class.n()
    }

    /// Number of coefficients (complex when complexified).
    pub fn num_coeffs(&self) -> usize {
        self.class.dim()
    }

    /// Real dimension of the parameter space.
    pub fn parameter_dim(&self) -> usize {
        self.class.dim() * if self.complexified { 2 } else { 1 }
    }

    pub fn info(&self) -> SpaceInfo {
        SpaceInfo {
            class_name: self.class.name().to_string(),
            n: self.n(),
            complexified: self.complexified,
            parameter_dim: self.parameter_dim(),
        }
    }

    pub fn expr(&self, params: &[Complex64]) -> Result<OperatorExpr> {
        if !self.complexified && params.iter().any(|p| p.im != 0.0) {
            return Err(Error::Precondition("complex parameters in a real search space".into()));
        }
        OperatorExpr::new(self.class.clone(), params.to_vec())
    }

    fn eigensystem(&self, params: &[Complex64]) -> Result<EigenSystem> {
        let dense = self.expr(params)?.dense()?;
        if self.complexified {
            eig_general(&dense)
        } else {
            eigh(&dense)
        }
    }
}

/// Gauge-fixed coefficients with the uniform rotation that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeFix {
    pub coeffs: TICoefficients,
    /// Induced index rotation `R`: block `c' = R c R^T`, field `c0' = R c0`.
    pub rotation: [[f64; 3]; 3],
    /// Rotation vector of the first stage (field onto the z axis).
    pub first_stage: [f64; 3],
    /// Angle of the second stage (about z).
    pub second_stage: f64,
    /// The field vanished and the first stage was skipped.
    pub field_stage_skipped: bool,
    /// All three fixed slots vanish to working precision.
    pub perfect: bool,
}

impl GaugeFix {
    /// Single-site unitary `g` with `g sigma^a g^{-1} = sum_b R[b][a] sigma^b`.
    pub fn unitary(&self) -> Mat2 {
        let c = |x: f64| Complex64::new(x, 0.0);
        let g1 = exp_su2(&self.first_stage.map(c));
        let g2 = exp_su2(&[ZERO, ZERO, c(self.second_stage)]);
        mul2(&g2, &g1)
    }
}

fn apply_rotation(tc: &TICoefficients, r: &[[f64; 3]; 3]) -> TICoefficients {
    apply_rotation_complex(tc, &real3_to_complex(r))
}

fn apply_rotation_complex(tc: &TICoefficients, r: &Mat3) -> TICoefficients {
    let rc = |i: usize, j: usize| r[i][j];
    let field = tc.field();
    let block = tc.block();
    let mut f2 = [ZERO; 3];
    let mut b2 = [[ZERO; 3]; 3];
    for i in 0..3 {
        f2[i] = (0..3).map(|a| rc(i, a) * field[a]).sum();
        for j in 0..3 {
            let mut acc = ZERO;
            for a in 0..3 {
                for b in 0..3 {
                    acc += rc(i, a) * block[a][b] * rc(j, b);
                }
            }
            b2[i][j] = acc;
        }
    }
    TICoefficients::from_parts(f2, b2)
}

/// Rotates real translation-invariant coefficients so that `c01 = c02 = 0`
/// (field along z) and then, about z, so that `c12 = 0` when possible.
pub fn gauge_fix(tc: &TICoefficients) -> Result<GaugeFix> {
    let scale = tc.max_abs().max(f64::MIN_POSITIVE);
    if !tc.is_real(1e-14 * scale) {
        return Err(Error::Precondition("gauge fixing needs real coefficients".into()));
    }
    let tol = 1e-12 * scale;
    let field: Vec<f64> = tc.field().iter().map(|v| v.re).collect();
    let fnorm = field.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut first = [0.0; 3];
    let skipped = fnorm <= tol;
    if !skipped {
        let u = [field[0] / fnorm, field[1] / fnorm, field[2] / fnorm];
        // axis u x e3, angle between u and e3
        let axis = [u[1], -u[0], 0.0];
        let s = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
        let angle = s.atan2(u[2]);
        if s > 1e-15 {
            first = [axis[0] / s * angle, axis[1] / s * angle, 0.0];
        } else if u[2] < 0.0 {
            first = [std::f64::consts::PI, 0.0, 0.0];
        }
    }
    let r1 = rotation_from_vector(first);
    let mid = apply_rotation(tc, &r1);
    let blk = mid.block();
    let (s00, s11) = (blk[0][0].re, blk[1][1].re);
    let s01 = 0.5 * (blk[0][1].re + blk[1][0].re);
    let anti = 0.5 * (blk[0][1].re - blk[1][0].re);
    let delta = 0.5 * (s00 - s11);
    // c12 after rotating by phi about z: delta sin 2phi + s01 cos 2phi + anti
    let r = (s01 * s01 + delta * delta).sqrt();
    let phi = if r > tol {
        let psi = delta.atan2(s01);
        0.5 * ((-anti / r).clamp(-1.0, 1.0).acos() + psi)
    } else {
        0.0
    };
    let rz = rodrigues([0.0, 0.0, 1.0], phi);
    let rotation = mul3(&rz, &r1);
    let coeffs = apply_rotation(tc, &rotation);
    let mut fixed = coeffs;
    let perfect = coeffs.is_gauge_fixed(1e-10 * scale);
    if perfect {
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            fixed.set(a, b, ZERO);
        }
    }
    Ok(GaugeFix {
        coeffs: fixed,
        rotation,
        first_stage: first,
        second_stage: phi,
        field_stage_skipped: skipped,
        perfect,
    })
}

/// Like [`gauge_fix`], but lets the second-stage angle become complex when no
/// real angle removes `c12`. The result then lies in the complexified slice and
/// is related to the input by an invertible (not unitary) uniform conjugation.
pub fn gauge_fix_complexified(tc: &TICoefficients) -> Result<(TICoefficients, Mat2)> {
    let gf = gauge_fix(tc)?;
    if gf.perfect {
        let g = gf.unitary();
        return Ok((gf.coeffs, g));
    }
    let scale = tc.max_abs().max(f64::MIN_POSITIVE);
    let r1 = rotation_from_vector(gf.first_stage);
    let blk = apply_rotation(tc, &r1).block();
    let (s00, s11) = (blk[0][0].re, blk[1][1].re);
    let s01 = 0.5 * (blk[0][1].re + blk[1][0].re);
    let anti = 0.5 * (blk[0][1].re - blk[1][0].re);
    let delta = 0.5 * (s00 - s11);
    let r = (s01 * s01 + delta * delta).sqrt();
    if r <= 1e-12 * scale {
        return Err(Error::Precondition("isotropic xy block: c12 cannot be removed".into()));
    }
    let psi = delta.atan2(s01);
    let phi = (Complex64::new(-anti / r, 0.0).acos() + psi) * 0.5;
    let c = |x: f64| Complex64::new(x, 0.0);
    let g1 = exp_su2(&gf.first_stage.map(c));
    let g = mul2(&exp_su2(&[ZERO, ZERO, phi]), &g1);
    let mut out = apply_rotation_complex(tc, &induced_rotation(&g)?);
    if !out.is_gauge_fixed(1e-9 * scale) {
        return Err(Error::Precondition("complexified gauge fix did not converge".into()));
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        out.set(a, b, ZERO);
    }
    Ok((out, g))
}

fn rotation_from_vector(v: [f64; 3]) -> [[f64; 3]; 3] {
    let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if angle == 0.0 {
        return rodrigues([0.0, 0.0, 1.0], 0.0);
    }
    rodrigues([v[0] / angle, v[1] / angle, v[2] / angle], angle)
}

/// Matched residual `lambda_{pi(k)}(H(params)) - target_k`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub residual: Vec<Complex64>,
    /// `matching[k]` is the index (in sorted order) of the eigenvalue paired with `target[k]`.
    pub matching: Vec<usize>,
}

fn check_target(target: &Spectrum, space: &SearchSpace) -> Result<()> {
    let dim = 1usize << space.n();
    if target.len() != dim {
        return Err(Error::DimensionMismatch(format!("target has {} values, expected {dim}", target.len())));
    }
    Ok(())
}

fn matched(es: &EigenSystem, target: &Spectrum) -> Result<Objective> {
    let (matching, _) = optimal_matching(&es.values, target.values())?;
    let residual: Vec<Complex64> =
        matching.iter().zip(target.values()).map(|(&i, t)| es.values[i] - t).collect();
    let value = residual.iter().map(|r| r.norm_sqr()).sum::<f64>().sqrt();
    Ok(Objective { value, residual, matching })
}

pub fn objective(params: &[Complex64], target: &Spectrum, space: &SearchSpace) -> Result<Objective> {
    check_target(target, space)?;
    matched(&space.eigensystem(params)?, target)
}

/// `d lambda_i / d p_j = w_i^H B_j v_i / (w_i^H v_i)` in the eigensystem's
/// (sorted) order.
fn jacobian_from(es: &EigenSystem, space: &SearchSpace) -> Result<Mat<Complex64>> {
    if let Some((index, condition)) = es.first_defective(DEFECTIVE_CONDITION) {
        return Err(Error::DefectivePoint { index, condition });
    }
    let basis = space.class.basis();
    let rows: Vec<Vec<Complex64>> = (0..es.dim())
        .into_par_iter()
        .map(|i| {
            let v = es.right.col(i).try_as_col_major().expect("owned columns are contiguous").as_slice();
            let w = es.left.col(i).try_as_col_major().expect("owned columns are contiguous").as_slice();
            let denom: Complex64 = w.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
            basis.iter().map(|op| op.terms.iter().map(|p| p.sandwich(w, v)).sum::<Complex64>() / denom).collect()
        })
        .collect();
    Ok(Mat::from_fn(es.dim(), basis.len(), |i, j| rows[i][j]))
}

pub fn eig_jacobian(params: &[Complex64], space: &SearchSpace) -> Result<Mat<Complex64>> {
    jacobian_from(&space.eigensystem(params)?, space)
}

/// Central differences, each perturbed spectrum re-paired with the base one.
pub fn fd_jacobian(params: &[Complex64], space: &SearchSpace, step: f64) -> Result<Mat<Complex64>> {
    let base = space.eigensystem(params)?;
    let m = params.len();
    let mut jac = Mat::<Complex64>::zeros(base.dim(), m);
    for j in 0..m {
        let mut plus = params.to_vec();
        let mut minus = params.to_vec();
        plus[j] += step;
        minus[j] -= step;
        let ep = space.eigensystem(&plus)?;
        let em = space.eigensystem(&minus)?;
        let (pp, _) = optimal_matching(&ep.values, &base.values)?;
        let (pm, _) = optimal_matching(&em.values, &base.values)?;
        for i in 0..base.dim() {
            jac[(i, j)] = (ep.values[pp[i]] - em.values[pm[i]]) / (2.0 * step);
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LevenbergMarquardt,
    GradientDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Stop when the distance falls below `success_tol * scale`.
    pub success_tol: f64,
    /// Minima below `classify_tol * scale` count as converged and are classified.
    pub classify_tol: f64,
    pub max_iter: usize,
    /// Relative step size treated as a stall.
    pub stall_tol: f64,
    pub method: Method,
    /// Starts for the equivalence classification of each converged minimum.
    pub equivalence_starts: usize,
    #[serde(default = "default_equivalence_tol")]
    pub equivalence_tol: f64,
    pub classify: bool,
}

fn default_equivalence_tol() -> f64 {
    crate::equivalence::DEFAULT_ACCEPT_TOL
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            success_tol: 1e-8,
            classify_tol: 1e-6,
            max_iter: 500,
            stall_tol: 1e-14,
            method: Method::LevenbergMarquardt,
            equivalence_starts: crate::equivalence::DEFAULT_STARTS,
            equivalence_tol: default_equivalence_tol(),
            classify: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIter,
    Stalled,
    Failed,
}

/// Result of one descent.
#[derive(Debug, Clone)]
pub struct Descent {
    pub params: Vec<Complex64>,
    pub distance: f64,
    pub iters: usize,
    pub stop: StopReason,
    pub fd_fallbacks: usize,
}

struct State {
    params: Vec<Complex64>,
    es: EigenSystem,
    obj: Objective,
}

fn evaluate(params: Vec<Complex64>, target: &Spectrum, space: &SearchSpace) -> Result<State> {
    let es = space.eigensystem(&params)?;
    let obj = matched(&es, target)?;
    Ok(State { params, es, obj })
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Damped Gauss-Newton (or plain gradient) descent on the matched residual,
/// re-pairing eigenvalues with the target at every evaluation.
pub fn descend(start: &[Complex64], target: &Spectrum, space: &SearchSpace, opts: &SearchOptions) -> Result<Descent> {
    check_target(target, space)?;
    if start.len() != space.num_coeffs() {
        return Err(Error::DimensionMismatch(format!("{} parameters for {} coefficients", start.len(), space.num_coeffs())));
    }
    let goal = opts.success_tol * target.scale();
    let mut state = match evaluate(start.to_vec(), target, space) {
        Ok(s) => s,
        Err(_) => {
            return Ok(Descent { params: start.to_vec(), distance: f64::INFINITY, iters: 0, stop: StopReason::Failed, fd_fallbacks: 0 })
        }
    };
    let m = start.len();
    let mut mu = 1e-3;
    let mut nu = 2.0;
    let mut lr = 1e-2;
    let mut fd_fallbacks = 0;
    let mut iters = 0;
    let mut stop = StopReason::MaxIter;
    while iters < opts.max_iter {
        if state.obj.value < goal {
            stop = StopReason::Converged;
            break;
        }
        iters += 1;
        let raw = match jacobian_from(&state.es, space) {
            Ok(j) => j,
            Err(Error::DefectivePoint { .. }) => {
                fd_fallbacks += 1;
                let step = 1e-6 * state.params.iter().map(|p| p.norm()).fold(1.0, f64::max);
                match fd_jacobian(&state.params, space, step) {
                    Ok(j) => j,
                    Err(_) => {
                        stop = StopReason::Failed;
                        break;
                    }
                }
            }
            Err(_) => {
                stop = StopReason::Failed;
                break;
            }
        };
        let rows = state.obj.matching.len();
        let jac = Mat::<Complex64>::from_fn(rows, m, |k, j| raw[(state.obj.matching[k], j)]);
        let r = Mat::<Complex64>::from_fn(rows, 1, |k, _| state.obj.residual[k]);
        let a = jac.adjoint() * &jac;
        let g = jac.adjoint() * &r;
        let cost = state.obj.value * state.obj.value;
        let max_diag = (0..m).map(|i| a[(i, i)].re).fold(0.0, f64::max);
        let mut accepted = false;
        for _ in 0..60 {
            let step: Vec<Complex64> = match opts.method {
                Method::LevenbergMarquardt => {
                    let damped = Mat::<Complex64>::from_fn(m, m, |i, j| {
                        if i == j {
                            a[(i, j)] + mu * a[(i, i)].re.max(1e-12 * max_diag).max(f64::MIN_POSITIVE)
                        } else {
                            a[(i, j)]
                        }
                    });
                    let sol = damped.partial_piv_lu().solve(&g);
                    (0..m).map(|i| -sol[(i, 0)]).collect()
                }
                Method::GradientDescent => (0..m).map(|i| -g[(i, 0)] * lr).collect(),
            };
            let step: Vec<Complex64> =
                if space.complexified { step } else { step.iter().map(|s| Complex64::new(s.re, 0.0)).collect() };
            if step.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
                break;
            }
            if norm(&step) <= opts.stall_tol * (norm(&state.params) + opts.stall_tol) {
                break;
            }
            let trial: Vec<Complex64> = state.params.iter().zip(&step).map(|(p, s)| p + s).collect();
            let Ok(next) = evaluate(trial, target, space) else {
                mu *= nu;
                nu *= 2.0;
                lr *= 0.5;
                continue;
            };
            let new_cost = next.obj.value * next.obj.value;
            let jd = &jac * Mat::<Complex64>::from_fn(m, 1, |i, _| step[i]);
            let predicted = cost - (0..rows).map(|k| (r[(k, 0)] + jd[(k, 0)]).norm_sqr()).sum::<f64>();
            let rho = if predicted > 0.0 { (cost - new_cost) / predicted } else { -1.0 };
            if new_cost < cost && rho > 0.0 {
                mu *= (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                lr *= 1.5;
                state = next;
                accepted = true;
                break;
            }
            mu *= nu;
            nu *= 2.0;
            lr *= 0.5;
        }
        if !accepted {
            stop = StopReason::Stalled;
            break;
        }
    }
    if state.obj.value < goal {
        stop = StopReason::Converged;
    }
    Ok(Descent { params: state.params, distance: state.obj.value, iters, stop, fd_fallbacks })
}

/// Standard normal coefficients (independent real and imaginary parts when
/// complexified), rescaled so that `||H||_F` matches the target's.
pub fn random_start(space: &SearchSpace, target: &Spectrum, seed: u64) -> Result<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<Complex64> = (0..space.num_coeffs())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = if space.complexified { StandardNormal.sample(&mut rng) } else { 0.0 };
            Complex64::new(re, im)
        })
        .collect();
    let frob = space.expr(&p)?.pauli_sum().norm() * ((1usize << space.n()) as f64).sqrt();
    let want = target.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if frob > 0.0 && want > 0.0 {
        let alpha = want / frob;
        p.iter_mut().for_each(|x| *x *= alpha);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    TrivialEquivalent,
    CandidateDual,
    NonConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumRecord {
    pub start: usize,
    #[serde(with = "complex_vec")]
    pub params: Vec<Complex64>,
    pub distance: f64,
    pub classification: Classification,
    pub iters: usize,
    pub stop: StopReason,
    pub fd_fallbacks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_residual: Option<f64>,
    /// Distance from an independent re-diagonalization, recorded for candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchAggregate {
    pub converged: usize,
    pub trivial_equivalent: usize,
    pub candidate_dual: usize,
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub format: String,
    pub space: SpaceInfo,
    pub target_spectrum_digest: String,
    pub scale: f64,
    pub seed: u64,
    pub starts: usize,
    pub options: SearchOptions,
    pub minima: Vec<MinimumRecord>,
    pub aggregate: SearchAggregate,
}

/// Classifies a converged point against `h0`.
fn classify(
    h0: &OperatorExpr,
    found: &OperatorExpr,
    target: &Spectrum,
    complexified: bool,
    opts: &SearchOptions,
    seed: u64,
) -> Result<(Classification, Option<Witness>, Option<f64>, Option<f64>)> {
    let lifted = OperatorExpr::from_pauli_sum(h0.class_arc().clone(), &found.pauli_sum(), 1e-10)?;
    let eq_opts = EquivalenceOptions {
        group: if complexified { GroupKind::Complexified } else { GroupKind::Unitary },
        starts: opts.equivalence_starts,
        accept_tol: opts.equivalence_tol,
        seed,
        ..Default::default()
    };
    let verdict = decide_equivalent(h0, &lifted, &eq_opts)?;
    if verdict.verdict == VerdictKind::Equivalent {
        return Ok((Classification::TrivialEquivalent, verdict.witness, Some(verdict.residual), None));
    }
    let check = spectral_distance(&spectrum_of(found)?, target)?;
    let class = if check < opts.success_tol * target.scale() {
        Classification::CandidateDual
    } else {
        Classification::NonConverged
    };
    Ok((class, None, Some(verdict.residual), Some(check)))
}

/// Runs one descent from `start` and classifies the result.
pub fn search_from(
    h0: &OperatorExpr,
    space: &SearchSpace,
    start: &[Complex64],
    index: usize,
    seed: u64,
    opts: &SearchOptions,
) -> Result<MinimumRecord> {
    let target = spectrum_of(h0)?;
    run_start(h0, space, &target, start, index, seed, opts)
}

fn run_start(
    h0: &OperatorExpr,
    space: &SearchSpace,
    target: &Spectrum,
    start: &[Complex64],
    index: usize,
    seed: u64,
    opts: &SearchOptions,
) -> Result<MinimumRecord> {
    let d = descend(start, target, space, opts)?;
    let mut rec = MinimumRecord {
        start: index,
        params: d.params.clone(),
        distance: d.distance,
        classification: Classification::NonConverged,
        iters: d.iters,
        stop: d.stop,
        fd_fallbacks: d.fd_fallbacks,
        equivalence_witness: None,
        equivalence_residual: None,
        verified_distance: None,
    };
    if opts.classify && d.distance < opts.classify_tol * target.scale() {
        let found = space.expr(&d.params)?;
        let (c, w, r, v) = classify(h0, &found, target, space.complexified, opts, derive_seed(seed, &[1]))?;
        rec.classification = c;
        rec.equivalence_witness = w;
        rec.equivalence_residual = r;
        rec.verified_distance = v;
    }
    Ok(rec)
}

fn check_h0(h0: &OperatorExpr, space: &SearchSpace) -> Result<()> {
    if h0.n() != space.n() {
        return Err(Error::DimensionMismatch(format!("operator on {} sites, space on {}", h0.n(), space.n())));
    }
    if !h0.is_hermitian(1e-12) {
        return Err(Error::Precondition("the reference operator must be Hermitian".into()));
    }
    Ok(())
}

/// Multistart search for isospectral partners of `h0` in `space`.
pub fn search_duals(
    h0: &OperatorExpr,
    space: &SearchSpace,
    starts: usize,
    seed: u64,
    opts: &SearchOptions,
) -> Result<SearchReport> {
    check_h0(h0, space)?;
    let target = spectrum_of(h0)?;
    let minima: Vec<MinimumRecord> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, &[i as u64]);
            let start = random_start(space, &target, s)?;
            run_start(h0, space, &target, &start, i, s, opts)
        })
        .collect::<Result<_>>()?;
    let mut aggregate = SearchAggregate::default();
    for m in &minima {
        if m.distance < opts.classify_tol * target.scale() {
            aggregate.converged += 1;
        }
        match m.classification {
            Classification::TrivialEquivalent => aggregate.trivial_equivalent += 1,
            Classification::CandidateDual => aggregate.candidate_dual += 1,
            Classification::NonConverged => aggregate.non_converged += 1,
        }
    }
    Ok(SearchReport {
        format: SEARCH_FORMAT.into(),
        space: space.info(),
        target_spectrum_digest: digest_complex(target.values()),
        scale: target.scale(),
        seed,
        starts,
        options: *opts,
        minima,
        aggregate,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub trials: usize,
    pub all_trivial: usize,
    pub any_candidate_dual: usize,
    pub any_non_converged: usize,
    pub starts_total: usize,
    pub starts_converged: usize,
    pub converged_trivial: usize,
    pub converged_candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrial {
    pub trial: usize,
    pub seed: u64,
    #[serde(with = "complex_vec")]
    pub h0: Vec<Complex64>,
    pub report: SearchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub format: String,
    pub seed: u64,
    pub num_h0: usize,
    pub starts_per_h0: usize,
    pub aggregate: BatchAggregate,
    pub trials: Vec<BatchTrial>,
}

/// Trial `t` of [`batch_trials`]: a reference sampled from the space's
/// symmetry closure with seed `derive_seed(seed, [t])`.
pub fn batch_trial(t: usize, starts: usize, space: &SearchSpace, seed: u64, opts: &SearchOptions) -> Result<BatchTrial> {
    let closure = Arc::new(space.class.symmetry_closure()?);
    let trial_seed = derive_seed(seed, &[t as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let h0 = sample_hamiltonian(closure, &mut rng);
    let report = search_duals(&h0, space, starts, derive_seed(trial_seed, &[0]), opts)?;
    Ok(BatchTrial { trial: t, seed: trial_seed, h0: h0.coeffs().to_vec(), report })
}

/// Random Hermitian references drawn from the space's symmetry closure, each
/// searched from `starts_per_h0` random starts.
pub fn batch_trials(
    num_h0: usize,
    starts_per_h0: usize,
    space: &SearchSpace,
    seed: u64,
    opts: &SearchOptions,
) -> Result<BatchReport> {
    let trials: Vec<BatchTrial> =
        (0..num_h0).map(|t| batch_trial(t, starts_per_h0, space, seed, opts)).collect::<Result<_>>()?;
    let mut agg = BatchAggregate { trials: num_h0, ..Default::default() };
    for t in &trials {
        let a = &t.report.aggregate;
        agg.starts_total += t.report.starts;
        agg.starts_converged += a.converged;
        agg.converged_trivial += a.trivial_equivalent;
        agg.converged_candidate += a.candidate_dual;
        if a.candidate_dual > 0 {
            agg.any_candidate_dual += 1;
        }
        if a.non_converged > 0 {
            agg.any_non_converged += 1;
        }
        if a.trivial_equivalent == t.report.starts {
            agg.all_trivial += 1;
        }
    }
    Ok(BatchReport {
        format: BATCH_FORMAT.into(),
        seed,
        num_h0,
        starts_per_h0,
        aggregate: agg,
        trials,
    })
}

/// Gauge-fixed parameters of a translation-invariant reference. Without
/// `complexified`, references lacking a perfect real gauge fix are refused.
pub fn gauge_fixed_start(h0: &OperatorExpr, complexified: bool) -> Result<Vec<Complex64>> {
    if !matches!(h0.class().kind(), ClassKind::TiChainPeriodic | ClassKind::TiChainGaugeFixed) {
        return Err(Error::Precondition("gauge fixing applies to translation-invariant chains".into()));
    }
    let tc = crate::models::expr_to_ti(h0)?;
    if complexified {
        return Ok(gauge_fix_complexified(&tc)?.0.slot_values(true));
    }
    let gf = gauge_fix(&tc)?;
    if !gf.perfect {
        return Err(Error::Precondition("no perfect gauge fix for this reference".into()));
    }
    Ok(gf.coeffs.slot_values(true))
}
