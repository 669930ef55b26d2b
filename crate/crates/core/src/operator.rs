//! Operators as coefficient vectors over a [`LocalityClass`] and as explicit
//! Pauli expansions, with dense realizations.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;

use crate::class::LocalityClass;
use crate::error::{Error, Result};
use crate::pauli::PauliString;

/// Default cap on the number of sites for dense realizations.
pub const DEFAULT_MAX_SITES: usize = 12;

/// Site cap for dense matrices; `TPS_SPECTRA_MAX_N` overrides the default.
pub fn dense_site_cap() -> usize {
    std::env::var("TPS_SPECTRA_MAX_N")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_SITES)
}

fn check_cap(n: usize) -> Result<()> {
    let cap = dense_site_cap();
    if n > cap || n >= usize::BITS as usize / 2 {
        return Err(Error::DimensionOverflow { n, cap });
    }
    Ok(())
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Sparse Pauli expansion `sum_P c_P P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

impl PauliSum {
    pub fn new(n: usize) -> Self {
        Self { n, terms: BTreeMap::new() }
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (PauliString, Complex64)>) -> Self {
        let mut s = Self::new(n);
        for (p, c) in terms {
            s.add(p, c);
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, p: PauliString, c: Complex64) {
        debug_assert_eq!(p.n(), self.n);
        *self.terms.entry(p).or_insert(ZERO) += c;
    }

    pub fn get(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or(ZERO)
    }

    pub fn terms(&self) -> &BTreeMap<PauliString, Complex64> {
        &self.terms
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drops terms with `|c| <= tol`.
    pub fn pruned(mut self, tol: f64) -> Self {
        self.terms.retain(|_, c| c.norm() > tol);
        self
    }

    /// l2 norm of the coefficient vector; `||H||_F = sqrt(2^n) * norm()`.
    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|(p, c)| (*p, c * a)).collect() }
    }

    pub fn sub(&self, other: &PauliSum) -> PauliSum {
        let mut out = self.clone();
        for (p, c) in &other.terms {
            out.add(*p, -c);
        }
        out
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &PauliSum) -> PauliSum {
        let mut out = PauliSum::new(self.n);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                if a.commutes_with(b) {
                    continue;
                }
                let (ph, r) = a.mul(b);
                out.add(r, ca * cb * ph.to_complex() * 2.0);
            }
        }
        out
    }

    /// Plain transpose: `P^T = (-1)^{#Y} P`, coefficients untouched.
    pub fn transpose(&self) -> PauliSum {
        let terms = self
            .terms
            .iter()
            .map(|(p, c)| (*p, if p.y_count() % 2 == 1 { -c } else { *c }))
            .collect();
        Self { n: self.n, terms }
    }

    /// Moves the letter at site `s` to site `perm[s]`.
    pub fn permute_sites(&self, perm: &[usize]) -> PauliSum {
        Self::from_terms(self.n, self.terms.iter().map(|(p, c)| (p.permute_sites(perm), *c)))
    }

    /// Conjugation by the same 2x2 operator on every site, given through its
    /// induced action `g s^a g^{-1} = sum_b rot[b][a] s^b` on Pauli indices.
    pub fn conjugate_uniform(&self, rot: &[[Complex64; 3]; 3]) -> PauliSum {
        let mut out = PauliSum::new(self.n);
        for (p, c) in &self.terms {
            let support = p.support();
            let letters: Vec<usize> = support.iter().map(|&s| p.letter(s) as usize - 1).collect();
            let w = support.len();
            for code in 0..3usize.pow(w as u32) {
                let mut rem = code;
                let mut amp = *c;
                let mut entries = Vec::with_capacity(w);
                for (idx, &s) in support.iter().enumerate() {
                    let b = rem % 3;
                    rem /= 3;
                    amp *= rot[b][letters[idx]];
                    entries.push((s, b as u8 + 1));
                }
                if amp != ZERO {
                    out.add(PauliString::from_sparse(self.n, &entries), amp);
                }
            }
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.norm().max(1.0);
        self.terms.values().all(|c| c.im.abs() <= tol * scale)
    }

    /// Dense `2^n x 2^n` realization.
    pub fn dense(&self) -> Result<Mat<Complex64>> {
        check_cap(self.n)?;
        let dim = 1usize << self.n;
        let mut m = Mat::<Complex64>::zeros(dim, dim);
        for (p, c) in &self.terms {
            for k in 0..dim {
                m[(p.flip(k), k)] += c * p.column_phase(k);
            }
        }
        Ok(m)
    }

    /// `tr(P^dagger A) / 2^n` for every requested string.
    pub fn from_dense_on(strings: &[PauliString], a: &Mat<Complex64>) -> Result<PauliSum> {
        let dim = a.nrows();
        if a.ncols() != dim || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::DimensionMismatch(format!("{}x{} is not a qubit operator", a.nrows(), a.ncols())));
        }
        let n = dim.trailing_zeros() as usize;
        let mut out = PauliSum::new(n);
        for p in strings {
            if p.n() != n {
                return Err(Error::DimensionMismatch(format!("string {p} vs {n} sites")));
            }
            let mut acc = ZERO;
            for k in 0..dim {
                acc += p.column_phase(k).conj() * a[(p.flip(k), k)];
            }
            out.add(*p, acc / dim as f64);
        }
        Ok(out)
    }
}

/// A member of (the complexification of) a locality class.
#[derive(Debug, Clone)]
pub struct OperatorExpr {
    class: Arc<LocalityClass>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for OperatorExpr {
    fn eq(&self, other: &Self) -> bool {
        self.class == other.class && self.coeffs == other.coeffs
    }
}

impl OperatorExpr {
    pub fn new(class: Arc<LocalityClass>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != class.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a class of dimension {}",
                coeffs.len(),
                class.dim()
            )));
        }
        Ok(Self { class, coeffs })
    }

    pub fn from_real(class: Arc<LocalityClass>, coeffs: &[f64]) -> Result<Self> {
        Self::new(class, coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zeros(class: Arc<LocalityClass>) -> Self {
        let s = class.dim();
        Self { class, coeffs: vec![ZERO; s] }
    }

    pub fn class(&self) -> &LocalityClass {
        &self.class
    }

    pub fn class_arc(&self) -> &Arc<LocalityClass> {
        &self.class
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn n(&self) -> usize {
        self.class.n()
    }

    /// Hermitian iff every coefficient is real (to `tol` relative).
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        self.coeffs.iter().all(|c| c.im.abs() <= tol * scale)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { class: self.class.clone(), coeffs: self.coeffs.iter().map(|c| c * a).collect() }
    }

    pub fn pauli_sum(&self) -> PauliSum {
        let mut s = PauliSum::new(self.n());
        for (c, op) in self.coeffs.iter().zip(self.class.basis()) {
            if *c == ZERO {
                continue;
            }
            for p in &op.terms {
                s.add(*p, *c);
            }
        }
        s
    }

    pub fn dense(&self) -> Result<Mat<Complex64>> {
        self.pauli_sum().dense()
    }

    /// Expresses a Pauli expansion in `class`. Fails when the part outside the
    /// class exceeds `tol` relative to the expansion's norm.
    pub fn from_pauli_sum(class: Arc<LocalityClass>, sum: &PauliSum, tol: f64) -> Result<Self> {
        if sum.n() != class.n() {
            return Err(Error::DimensionMismatch(format!("{} sites vs class on {}", sum.n(), class.n())));
        }
        let (coeffs, resid) = class.project(sum.terms());
        if resid > tol * sum.norm().max(1.0) {
            return Err(Error::NotInClass {
                class: class.kind().to_string(),
                detail: format!("projection residual {resid:.3e}"),
            });
        }
        Ok(Self { class, coeffs })
    }

    /// Coefficients from `tr(P^dagger A) / 2^n` followed by projection onto the
    /// class. Returns the relative Frobenius residual `||A - dense(expr)|| / ||A||`.
    pub fn from_dense(class: Arc<LocalityClass>, a: &Mat<Complex64>) -> Result<(Self, f64)> {
        let strings = class.strings();
        let sum = PauliSum::from_dense_on(&strings, a)?;
        if sum.n() != class.n() {
            return Err(Error::DimensionMismatch(format!("{} sites vs class on {}", sum.n(), class.n())));
        }
        let (coeffs, _) = class.project(sum.terms());
        let expr = Self { class, coeffs };
        let back = expr.dense()?;
        let diff = (&back - a).norm_l2();
        let scale = a.norm_l2().max(f64::MIN_POSITIVE);
        Ok((expr, if a.norm_l2() == 0.0 { diff } else { diff / scale }))
    }
}
