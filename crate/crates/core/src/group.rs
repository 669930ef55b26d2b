//! Single-site conjugations and their induced action on Pauli indices, plus
//! dense realizations of the discrete chain symmetries.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat3 = [[Complex64; 3]; 3];

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `sigma^1, sigma^2, sigma^3`.
pub fn sigma(a: usize) -> Mat2 {
    match a {
        0 => [[ZERO, ONE], [ONE, ZERO]],
        1 => [[ZERO, -I], [I, ZERO]],
        2 => [[ONE, ZERO], [ZERO, -ONE]],
        _ => panic!("sigma index {a} out of range"),
    }
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn det2(a: &Mat2) -> Complex64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn inv2(a: &Mat2) -> Result<Mat2> {
    let d = det2(a);
    if d.norm() < 1e-300 {
        return Err(Error::Precondition("singular 2x2 conjugation".into()));
    }
    Ok([[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]])
}

pub fn identity2() -> Mat2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

/// `exp(-i/2 theta . sigma)`; unitary for real `theta`, in `SL(2, C)` otherwise.
pub fn exp_su2(theta: &[Complex64; 3]) -> Mat2 {
    let t2: Complex64 = theta.iter().map(|t| t * t).sum();
    let t = t2.sqrt();
    let half = t * 0.5;
    let (cos, sinc) = if t.norm() < 1e-4 {
        // cos(t/2) and sin(t/2)/t to fourth order
        (ONE - t2 / 8.0 + t2 * t2 / 384.0, c(0.5, 0.0) - t2 / 48.0 + t2 * t2 / 3840.0)
    } else {
        (half.cos(), half.sin() / t)
    };
    let mut out = [[cos, ZERO], [ZERO, cos]];
    for (a, th) in theta.iter().enumerate() {
        let s = sigma(a);
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] -= I * sinc * th * s[i][j];
            }
        }
    }
    out
}

/// `R[b][a] = tr(sigma^b g sigma^a g^{-1}) / 2`, so that
/// `g sigma^a g^{-1} = sum_b R[b][a] sigma^b`.
pub fn induced_rotation(g: &Mat2) -> Result<Mat3> {
    let gi = inv2(g)?;
    let mut r = [[ZERO; 3]; 3];
    for a in 0..3 {
        let conj = mul2(&mul2(g, &sigma(a)), &gi);
        for b in 0..3 {
            let p = mul2(&sigma(b), &conj);
            r[b][a] = (p[0][0] + p[1][1]) * 0.5;
        }
    }
    Ok(r)
}

/// Right-handed rotation by `angle` about the unit `axis`.
pub fn rodrigues(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = axis;
    let (s, co) = angle.sin_cos();
    let t = 1.0 - co;
    [
        [co + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, co + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, co + z * z * t],
    ]
}

pub fn real3_to_complex(r: &[[f64; 3]; 3]) -> Mat3 {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = c(r[i][j], 0.0);
        }
    }
    out
}

pub fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Applies the same 2x2 matrix `g` on every site: `G A G^{-1}` with
/// `G = g (x) ... (x) g`.
pub fn conjugate_dense(a: &Mat<Complex64>, g: &Mat2, n: usize) -> Result<Mat<Complex64>> {
    let dim = 1usize << n;
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix on {n} sites", a.nrows(), a.ncols())));
    }
    let gi = inv2(g)?;
    let mut b = a.clone();
    for site in 0..n {
        let bit = 1usize << (n - 1 - site);
        for col in 0..dim {
            for r0 in (0..dim).filter(|r| r & bit == 0) {
                let r1 = r0 | bit;
                let (x0, x1) = (b[(r0, col)], b[(r1, col)]);
                b[(r0, col)] = g[0][0] * x0 + g[0][1] * x1;
                b[(r1, col)] = g[1][0] * x0 + g[1][1] * x1;
            }
        }
        for row in 0..dim {
            for c0 in (0..dim).filter(|k| k & bit == 0) {
                let c1 = c0 | bit;
                let (y0, y1) = (b[(row, c0)], b[(row, c1)]);
                b[(row, c0)] = y0 * gi[0][0] + y1 * gi[1][0];
                b[(row, c1)] = y0 * gi[0][1] + y1 * gi[1][1];
            }
        }
    }
    Ok(b)
}

/// Dense counterpart of moving the factor on site `s` to site `perm[s]`.
pub fn permute_dense(a: &Mat<Complex64>, perm: &[usize]) -> Mat<Complex64> {
    let n = perm.len();
    let dim = 1usize << n;
    let map = |k: usize| {
        let mut out = 0usize;
        for (s, &t) in perm.iter().enumerate() {
            if k >> (n - 1 - s) & 1 == 1 {
                out |= 1 << (n - 1 - t);
            }
        }
        out
    };
    let idx: Vec<usize> = (0..dim).map(map).collect();
    let mut out = Mat::<Complex64>::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            out[(idx[i], idx[j])] = a[(i, j)];
        }
    }
    out
}

/// Site map of the cyclic shift by `t` followed (optionally) by the mirror.
pub fn chain_permutation(n: usize, shift: usize, reflect: bool) -> Vec<usize> {
    (0..n)
        .map(|s| {
            let t = (s + shift) % n;
            if reflect {
                n - 1 - t
            } else {
                t
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::PauliSum;
    use crate::pauli::PauliString;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close3(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).norm() < tol))
    }

    #[test]
    fn exponential_is_unitary_for_real_angles() {
        let g = exp_su2(&[c(0.3, 0.0), c(-1.1, 0.0), c(2.0, 0.0)]);
        let gh = [[g[0][0].conj(), g[1][0].conj()], [g[0][1].conj(), g[1][1].conj()]];
        let p = mul2(&g, &gh);
        assert!((p[0][0] - ONE).norm() < 1e-14 && p[0][1].norm() < 1e-14);
        assert!((det2(&g) - ONE).norm() < 1e-14);
        let small = exp_su2(&[c(1e-7, 0.0), ZERO, ZERO]);
        assert!((small[0][1] - c(0.0, -0.5e-7)).norm() < 1e-15);
    }

    #[test]
    fn induced_rotation_matches_rodrigues() {
        let axis = [0.48, -0.6, 0.64];
        let angle = 1.234;
        let theta = axis.map(|x| c(x * angle, 0.0));
        let r = induced_rotation(&exp_su2(&theta)).unwrap();
        assert!(close3(&r, &real3_to_complex(&rodrigues(axis, angle)), 1e-13));
    }

    #[test]
    fn complex_rotation_is_complex_orthogonal() {
        let r = induced_rotation(&exp_su2(&[c(0.3, 0.7), c(-0.2, 0.1), c(0.5, -0.4)])).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: Complex64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { ONE } else { ZERO };
                assert!((dot - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_conjugation_matches_pauli_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 3;
        let mut sum = PauliSum::new(n);
        for label in ["XZI", "IYY", "ZIX", "IIZ", "YII"] {
            sum.add(PauliString::parse(label).unwrap(), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
        for theta in [[c(0.4, 0.0), c(1.0, 0.0), c(-0.3, 0.0)], [c(0.2, 0.5), c(-0.7, 0.1), c(0.3, -0.6)]] {
            let g = exp_su2(&theta);
            let r = induced_rotation(&g).unwrap();
            let via_pauli = sum.conjugate_uniform(&r).dense().unwrap();
            let via_dense = conjugate_dense(&sum.dense().unwrap(), &g, n).unwrap();
            assert!((&via_pauli - &via_dense).norm_l2() < 1e-12);
        }
    }

    #[test]
    fn dense_permutation_matches_pauli_level() {
        let n = 4;
        let mut sum = PauliSum::new(n);
        sum.add(PauliString::parse("XZII").unwrap(), c(1.0, 0.0));
        sum.add(PauliString::parse("IIYX").unwrap(), c(0.0, 0.5));
        for (shift, reflect) in [(1, false), (3, true), (0, true)] {
            let perm = chain_permutation(n, shift, reflect);
            let a = sum.permute_sites(&perm).dense().unwrap();
            let b = permute_dense(&sum.dense().unwrap(), &perm);
            assert!((&a - &b).norm_l2() < 1e-14);
        }
    }
}
