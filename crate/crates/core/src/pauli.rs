//! Pauli strings over `n` qubits.
//!
//! A string is stored as a pair of bit masks `(x, z)` laid out in basis-index
//! order: site `s` (0-based, leftmost factor of the Kronecker product) owns bit
//! `n - 1 - s`. With that layout the action on a computational basis state is
//!
//! ```text
//! P |k> = i^{#Y} (-1)^{popcount(k & z)} |k ^ x>
//! ```
//!
//! so dense realizations never need an explicit Kronecker product.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;

/// Largest site count representable by the bit-mask layout.
pub const MAX_STRING_SITES: usize = 64;

/// Single-site letter codes: 0 = I, 1 = X, 2 = Y, 3 = Z.
pub const LETTER_CHARS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Power of `i` (mod 4) attached to a Pauli product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Phase(pub u8);

impl Phase {
    pub const ONE: Phase = Phase(0);

    pub fn to_complex(self) -> Complex64 {
        match self.0 & 3 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    pub fn mul(self, other: Phase) -> Phase {
        Phase((self.0 + other.0) & 3)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: u8,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_STRING_SITES, "site count {n} out of range");
        Self { n: n as u8, x: 0, z: 0 }
    }

    /// Builds a string from letter codes `0..=3`. Returns `None` for a bad code
    /// or an unsupported length.
    pub fn from_letters(letters: &[u8]) -> Option<Self> {
        let n = letters.len();
        if n == 0 || n > MAX_STRING_SITES {
            return None;
        }
        let mut p = Self::identity(n);
        for (site, &l) in letters.iter().enumerate() {
            if l > 3 {
                return None;
            }
            p = p.with_letter(site, l);
        }
        Some(p)
    }

    /// Identity everywhere except the listed `(site, letter)` pairs.
    pub fn from_sparse(n: usize, entries: &[(usize, u8)]) -> Self {
        let mut p = Self::identity(n);
        for &(site, l) in entries {
            assert!(site < n && l <= 3);
            p = p.with_letter(site, l);
        }
        p
    }

    /// Parses strings such as `"XIZ"`.
    pub fn parse(label: &str) -> Option<Self> {
        let letters: Option<Vec<u8>> = label
            .chars()
            .map(|c| LETTER_CHARS.iter().position(|&l| l == c.to_ascii_uppercase()).map(|i| i as u8))
            .collect();
        Self::from_letters(&letters?)
    }

    #[inline]
    fn bit(&self, site: usize) -> u64 {
        1u64 << (self.n as usize - 1 - site)
    }

    pub fn with_letter(mut self, site: usize, letter: u8) -> Self {
        let b = self.bit(site);
        self.x &= !b;
        self.z &= !b;
        match letter {
            1 => self.x |= b,
            2 => {
                self.x |= b;
                self.z |= b
            }
            3 => self.z |= b,
            _ => {}
        }
        self
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn x_mask(&self) -> u64 {
        self.x
    }

    #[inline]
    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn letter(&self, site: usize) -> u8 {
        let b = self.bit(site);
        match (self.x & b != 0, self.z & b != 0) {
            (false, false) => 0,
            (true, false) => 1,
            (true, true) => 2,
            (false, true) => 3,
        }
    }

    pub fn letters(&self) -> Vec<u8> {
        (0..self.n()).map(|s| self.letter(s)).collect()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&s| self.letter(s) != 0).collect()
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        debug_assert_eq!(self.n, other.n);
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    /// `self * other = phase * result`.
    pub fn mul(&self, other: &PauliString) -> (Phase, PauliString) {
        debug_assert_eq!(self.n, other.n);
        let out = PauliString { n: self.n, x: self.x ^ other.x, z: self.z ^ other.z };
        // P = i^{y} X^x Z^z with y = #Y; moving Z^{z1} past X^{x2} costs (-1)^{z1.x2}.
        let e = self.y_count() + other.y_count() + 2 * (self.z & other.x).count_ones() + 4
            - (out.y_count() & 3);
        (Phase((e & 3) as u8), out)
    }

    /// Matrix element `<k ^ x| P |k>` for column `k`.
    #[inline]
    pub fn column_phase(&self, k: usize) -> Complex64 {
        let sign = (k as u64 & self.z).count_ones() & 1;
        Phase(((self.y_count() + 2 * sign) & 3) as u8).to_complex()
    }

    /// `<w| P |v>` for dense vectors of length `2^n`.
    pub fn sandwich(&self, w: &[Complex64], v: &[Complex64]) -> Complex64 {
        debug_assert_eq!(w.len(), v.len());
        let x = self.x as usize;
        let z = self.z as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, vk) in v.iter().enumerate() {
            let t = w[k ^ x].conj() * vk;
            if (k & z).count_ones() & 1 == 0 {
                acc += t;
            } else {
                acc -= t;
            }
        }
        acc * Phase((self.y_count() & 3) as u8).to_complex()
    }

    /// Row index hit by column `k`.
    #[inline]
    pub fn flip(&self, k: usize) -> usize {
        k ^ self.x as usize
    }

    /// Applies a site relabelling: letter at `s` moves to `perm[s]`.
    pub fn permute_sites(&self, perm: &[usize]) -> PauliString {
        debug_assert_eq!(perm.len(), self.n());
        let mut out = PauliString::identity(self.n());
        for s in 0..self.n() {
            let l = self.letter(s);
            if l != 0 {
                out = out.with_letter(perm[s], l);
            }
        }
        out
    }

    /// Sort key: weight, then support, then letters on the support.
    pub fn canonical_key(&self) -> (usize, Vec<usize>, Vec<u8>) {
        let support = self.support();
        let letters = support.iter().map(|&s| self.letter(s)).collect();
        (self.weight(), support, letters)
    }

    pub fn canonical_cmp(&self, other: &PauliString) -> Ordering {
        self.n.cmp(&other.n).then_with(|| self.canonical_key().cmp(&other.canonical_key()))
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_cmp(other)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in 0..self.n() {
            write!(f, "{}", LETTER_CHARS[self.letter(s) as usize])?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

/// Single-qubit Pauli matrices indexed by letter code.
pub fn single_site_matrix(letter: u8) -> [[Complex64; 2]; 2] {
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match letter {
        0 => [[one, o], [o, one]],
        1 => [[o, one], [one, o]],
        2 => [[o, -i], [i, o]],
        3 => [[one, o], [o, -one]],
        _ => panic!("letter code {letter} out of range"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kron_dense(p: &PauliString) -> Vec<Vec<Complex64>> {
        let mut m = vec![vec![Complex64::new(1.0, 0.0)]];
        for s in 0..p.n() {
            let a = single_site_matrix(p.letter(s));
            let d = m.len();
            let mut out = vec![vec![Complex64::new(0.0, 0.0); 2 * d]; 2 * d];
            for r in 0..d {
                for c in 0..d {
                    for i in 0..2 {
                        for j in 0..2 {
                            out[2 * r + i][2 * c + j] = m[r][c] * a[i][j];
                        }
                    }
                }
            }
            m = out;
        }
        m
    }

    fn sparse_dense(p: &PauliString) -> Vec<Vec<Complex64>> {
        let d = 1 << p.n();
        let mut m = vec![vec![Complex64::new(0.0, 0.0); d]; d];
        for k in 0..d {
            m[p.flip(k)][k] = p.column_phase(k);
        }
        m
    }

    fn all_strings(n: usize) -> Vec<PauliString> {
        (0..4usize.pow(n as u32))
            .map(|mut code| {
                let letters: Vec<u8> = (0..n)
                    .map(|_| {
                        let l = (code % 4) as u8;
                        code /= 4;
                        l
                    })
                    .collect();
                PauliString::from_letters(&letters).unwrap()
            })
            .collect()
    }

    #[test]
    fn letters_round_trip() {
        let p = PauliString::parse("XIYZ").unwrap();
        assert_eq!(p.letters(), vec![1, 0, 2, 3]);
        assert_eq!(p.support(), vec![0, 2, 3]);
        assert_eq!(p.weight(), 3);
        assert_eq!(p.to_string(), "XIYZ");
    }

    #[test]
    fn sandwich_matches_kronecker_product() {
        let w: Vec<Complex64> = (0..8).map(|k| Complex64::new(0.3 * k as f64 - 1.0, (k * k) as f64 * 0.1)).collect();
        let v: Vec<Complex64> = (0..8).map(|k| Complex64::new((k as f64).sin(), (k as f64).cos())).collect();
        for p in all_strings(3) {
            let m = kron_dense(&p);
            let mut expect = Complex64::new(0.0, 0.0);
            for r in 0..8 {
                for c in 0..8 {
                    expect += w[r].conj() * m[r][c] * v[c];
                }
            }
            assert!((p.sandwich(&w, &v) - expect).norm() < 1e-12, "{p}");
        }
    }

    #[test]
    fn column_action_matches_kronecker_product() {
        for p in all_strings(3) {
            assert_eq!(kron_dense(&p), sparse_dense(&p), "{p}");
        }
    }

    #[test]
    fn product_matches_dense_product() {
        let strings = all_strings(2);
        for a in &strings {
            for b in &strings {
                let (ph, c) = a.mul(b);
                let da = kron_dense(a);
                let db = kron_dense(b);
                let dc = kron_dense(&c);
                for r in 0..4 {
                    for col in 0..4 {
                        let prod: Complex64 = (0..4).map(|k| da[r][k] * db[k][col]).sum();
                        assert!((prod - ph.to_complex() * dc[r][col]).norm() < 1e-14, "{a} * {b}");
                    }
                }
                let (ph2, _) = b.mul(a);
                let same = ph == ph2;
                assert_eq!(same, a.commutes_with(b));
            }
        }
    }

    #[test]
    fn single_site_table() {
        let x = PauliString::parse("X").unwrap();
        let y = PauliString::parse("Y").unwrap();
        let z = PauliString::parse("Z").unwrap();
        assert_eq!(x.mul(&y), (Phase(1), z));
        assert_eq!(y.mul(&z), (Phase(1), x));
        assert_eq!(z.mul(&x), (Phase(1), y));
        assert_eq!(y.mul(&x), (Phase(3), z));
    }

    #[test]
    fn hilbert_schmidt_orthogonality() {
        let strings = all_strings(2);
        for a in &strings {
            for b in &strings {
                let da = kron_dense(a);
                let db = kron_dense(b);
                let tr: Complex64 =
                    (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| da[j][i].conj() * db[j][i]).sum();
                let expect = if a == b { 4.0 } else { 0.0 };
                assert!((tr - Complex64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn canonical_order() {
        let mut v = vec![
            PauliString::parse("ZI").unwrap(),
            PauliString::parse("XX").unwrap(),
            PauliString::parse("II").unwrap(),
            PauliString::parse("IX").unwrap(),
            PauliString::parse("XI").unwrap(),
        ];
        v.sort();
        let labels: Vec<String> = v.iter().map(|p| p.to_string()).collect();
        assert_eq!(labels, ["II", "XI", "ZI", "IX", "XX"]);
    }

    #[test]
    fn permute_sites_moves_letters() {
        let p = PauliString::parse("XYI").unwrap();
        assert_eq!(p.permute_sites(&[2, 1, 0]).to_string(), "IYX");
        assert_eq!(p.permute_sites(&[1, 2, 0]).to_string(), "IXY");
    }

    #[test]
    fn rejects_bad_letters() {
        assert!(PauliString::from_letters(&[0, 4]).is_none());
        assert!(PauliString::from_letters(&[]).is_none());
        assert!(PauliString::parse("XQ").is_none());
    }
}
