//! Named model families: the transverse-field Ising chain, its Kramers–Wannier
//! image, and translation-invariant chain coefficients.

use std::sync::Arc;

use num_complex::Complex64;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::class::{ti_slots, ClassKind, LocalityClass};
use crate::error::{Error, Result};
use crate::operator::{OperatorExpr, PauliSum};
use crate::pauli::PauliString;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn need_chain(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Precondition(format!("chain models need n >= 2, got {n}")));
    }
    Ok(())
}

/// `J sum_{i<n} Z_i Z_{i+1} + h sum_i X_i` (plus `J Z_n Z_1` when periodic).
pub fn build_ising(n: usize, j: f64, h: f64, open_boundary: bool) -> Result<OperatorExpr> {
    need_chain(n)?;
    let class = Arc::new(LocalityClass::nn_chain(n, !open_boundary)?);
    let mut sum = PauliSum::new(n);
    let bonds = if open_boundary { n - 1 } else { n };
    for i in 0..bonds {
        sum.add(PauliString::from_sparse(n, &[(i, 3), ((i + 1) % n, 3)]), re(j));
    }
    for i in 0..n {
        sum.add(PauliString::from_sparse(n, &[(i, 1)]), re(h));
    }
    OperatorExpr::from_pauli_sum(class, &sum, 1e-12)
}

/// Image of the open Ising chain under the bond/disorder map, written with
/// ordinary Pauli operators on new sites:
/// `J sum_i X_i + h sum_{i<n} Z_i Z_{i+1} - J X_n + h Z_1`.
pub fn build_ising_dual(n: usize, j: f64, h: f64) -> Result<OperatorExpr> {
    need_chain(n)?;
    let class = Arc::new(LocalityClass::nn_chain(n, false)?);
    let mut sum = PauliSum::new(n);
    for i in 0..n {
        sum.add(PauliString::from_sparse(n, &[(i, 1)]), re(j));
    }
    for i in 0..n - 1 {
        sum.add(PauliString::from_sparse(n, &[(i, 3), (i + 1, 3)]), re(h));
    }
    sum.add(PauliString::from_sparse(n, &[(n - 1, 1)]), re(-j));
    sum.add(PauliString::from_sparse(n, &[(0, 3)]), re(h));
    OperatorExpr::from_pauli_sum(class, &sum, 1e-12)
}

/// Random Hermitian member of `class`: iid standard normal coefficients, with
/// the identity direction (if any) set to zero.
pub fn sample_hamiltonian<R: rand::Rng + ?Sized>(class: Arc<LocalityClass>, rng: &mut R) -> OperatorExpr {
    let coeffs: Vec<f64> = class
        .basis()
        .iter()
        .map(|op| if op.is_identity() { 0.0 } else { rand_distr::StandardNormal.sample(rng) })
        .collect();
    OperatorExpr::from_real(class, &coeffs).expect("one coefficient per basis element")
}

/// Coordinates in the boundary class (`a1..a3, b1..b3, c1..c3, d1..d3`).
pub fn boundary_coeffs(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> Vec<f64> {
    a.into_iter().chain(b).chain(c).chain(d).collect()
}

/// Coefficients `c[a][b]` of `sum_i sigma^a_i sigma^b_{i+1}` on a periodic
/// chain, `a in 0..4` (0 = identity), `b in 1..4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TICoefficients {
    pub c: [[Complex64; 3]; 4],
}

impl Default for TICoefficients {
    fn default() -> Self {
        Self { c: [[ZERO; 3]; 4] }
    }
}

impl TICoefficients {
    pub fn from_real(c: [[f64; 3]; 4]) -> Self {
        let mut out = Self::default();
        for a in 0..4 {
            for b in 0..3 {
                out.c[a][b] = re(c[a][b]);
            }
        }
        out
    }

    /// Entry multiplying `sigma^a sigma^b` with `b` in `1..=3`.
    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.c[a][b - 1]
    }

    pub fn set(&mut self, a: usize, b: usize, v: Complex64) {
        self.c[a][b - 1] = v;
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.c.iter().flatten().all(|v| v.im.abs() <= tol)
    }

    pub fn is_gauge_fixed(&self, tol: f64) -> bool {
        [(0, 1), (0, 2), (1, 2)].iter().all(|&(a, b)| self.get(a, b).norm() <= tol)
    }

    /// Single-site row `(c01, c02, c03)`.
    pub fn field(&self) -> [Complex64; 3] {
        self.c[0]
    }

    /// Two-site block `c[a][b]`, `a, b in 1..=3`, as a 3x3 array.
    pub fn block(&self) -> [[Complex64; 3]; 3] {
        [self.c[1], self.c[2], self.c[3]]
    }

    pub fn from_parts(field: [Complex64; 3], block: [[Complex64; 3]; 3]) -> Self {
        Self { c: [field, block[0], block[1], block[2]] }
    }

    /// Values in class-slot order (12 entries, or 9 for the gauge slice).
    pub fn slot_values(&self, gauge_fixed: bool) -> Vec<Complex64> {
        ti_slots(gauge_fixed).into_iter().map(|(a, b)| self.get(a as usize, b as usize)).collect()
    }

    pub fn from_slot_values(values: &[Complex64], gauge_fixed: bool) -> Result<Self> {
        let slots = ti_slots(gauge_fixed);
        if values.len() != slots.len() {
            return Err(Error::DimensionMismatch(format!("{} values for {} slots", values.len(), slots.len())));
        }
        let mut out = Self::default();
        for ((a, b), v) in slots.into_iter().zip(values) {
            out.set(a as usize, b as usize, *v);
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Member of the 12-term periodic class for the given coefficients.
pub fn ti_to_expr(tc: &TICoefficients, n: usize) -> Result<OperatorExpr> {
    let class = Arc::new(LocalityClass::ti_chain(n, false)?);
    OperatorExpr::new(class, tc.slot_values(false))
}

/// Member of the 9-term gauge slice; fails when a zeroed slot is populated.
pub fn ti_to_gauge_fixed_expr(tc: &TICoefficients, n: usize) -> Result<OperatorExpr> {
    if !tc.is_gauge_fixed(1e-12 * tc.max_abs().max(1.0)) {
        return Err(Error::NotInClass {
            class: ClassKind::TiChainGaugeFixed.to_string(),
            detail: "c01, c02 and c12 must vanish".into(),
        });
    }
    let class = Arc::new(LocalityClass::ti_chain(n, true)?);
    OperatorExpr::new(class, tc.slot_values(true))
}

/// Inverse of [`ti_to_expr`] on the translation-invariant subspace.
pub fn expr_to_ti(expr: &OperatorExpr) -> Result<TICoefficients> {
    match expr.class().kind() {
        ClassKind::TiChainPeriodic => TICoefficients::from_slot_values(expr.coeffs(), false),
        ClassKind::TiChainGaugeFixed => TICoefficients::from_slot_values(expr.coeffs(), true),
        _ => {
            let class = Arc::new(LocalityClass::ti_chain(expr.n(), false)?);
            let ti = OperatorExpr::from_pauli_sum(class, &expr.pauli_sum(), 1e-10)?;
            TICoefficients::from_slot_values(ti.coeffs(), false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{eigh, spectral_distance, Spectrum};

    fn eigenvalues(expr: &OperatorExpr) -> Vec<f64> {
        eigh(&expr.dense().unwrap()).unwrap().values.iter().map(|v| v.re).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn ising_small_cases() {
        let e = eigenvalues(&build_ising(2, 1.0, 0.0, true).unwrap());
        assert!(close(&e, &[-1.0, -1.0, 1.0, 1.0], 1e-12));
        let e = eigenvalues(&build_ising(3, 0.0, 1.0, true).unwrap());
        assert!(close(&e, &[-3.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 3.0], 1e-12));
    }

    #[test]
    fn ising_dual_zero_couplings() {
        let d = build_ising_dual(5, 0.0, 0.0).unwrap();
        assert!(d.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn ising_dual_is_isospectral() {
        for &(n, j, h) in &[(6, 1.0, 0.7), (4, 1.0, 1.0), (3, -0.4, 1.9)] {
            let a = Spectrum::from_eigensystem(&eigh(&build_ising(n, j, h, true).unwrap().dense().unwrap()).unwrap());
            let b =
                Spectrum::from_eigensystem(&eigh(&build_ising_dual(n, j, h).unwrap().dense().unwrap()).unwrap());
            assert!(spectral_distance(&a, &b).unwrap() < 1e-10);
        }
    }

    #[test]
    fn ising_sits_in_boundary_class() {
        let n = 6;
        let class = Arc::new(LocalityClass::boundary(n).unwrap());
        let ising = build_ising(n, 1.0, 0.7, true).unwrap();
        let e = OperatorExpr::from_pauli_sum(class, &ising.pauli_sum(), 1e-12).unwrap();
        let expect = boundary_coeffs([0.0, 0.0, 1.0], [0.7, 0.0, 0.0], [0.0; 3], [0.7, 0.0, 0.0]);
        for (x, y) in e.coeffs().iter().zip(&expect) {
            assert!((x - re(*y)).norm() < 1e-12);
        }
    }

    #[test]
    fn ti_zz_chain() {
        let mut tc = TICoefficients::default();
        tc.set(3, 3, re(1.0));
        let e = eigenvalues(&ti_to_expr(&tc, 4).unwrap());
        // Periodic ZZ ring on 4 sites: 2 states at 4, 12 at 0, 2 at -4.
        let mut expect = vec![-4.0, -4.0];
        expect.extend(std::iter::repeat(0.0).take(12));
        expect.extend([4.0, 4.0]);
        assert!(close(&e, &expect, 1e-12));
        let zero = ti_to_expr(&TICoefficients::default(), 4).unwrap();
        assert!(zero.pauli_sum().is_empty());
    }

    #[test]
    fn ti_round_trip() {
        let mut tc = TICoefficients::default();
        for a in 0..4 {
            for b in 1..4 {
                tc.set(a, b, Complex64::new((a * 3 + b) as f64 * 0.37 - 1.0, 0.1 * b as f64));
            }
        }
        let expr = ti_to_expr(&tc, 5).unwrap();
        assert_eq!(expr_to_ti(&expr).unwrap(), tc);
        // Through a generic class as well.
        let generic = OperatorExpr::from_pauli_sum(
            Arc::new(LocalityClass::nn_chain(5, true).unwrap()),
            &expr.pauli_sum(),
            1e-12,
        )
        .unwrap();
        let back = expr_to_ti(&generic).unwrap();
        for a in 0..4 {
            for b in 0..3 {
                assert!((back.c[a][b] - tc.c[a][b]).norm() < 1e-12);
            }
        }
        assert!(ti_to_gauge_fixed_expr(&tc, 5).is_err());
    }
}
