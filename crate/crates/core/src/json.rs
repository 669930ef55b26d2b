//! Complex numbers as `{"re": .., "im": ..}` objects, and stable digests.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexJson {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<ComplexJson> for Complex64 {
    fn from(c: ComplexJson) -> Self {
        Complex64::new(c.re, c.im)
    }
}

pub mod complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|c| ComplexJson::from(*c)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<ComplexJson>::deserialize(d)?.into_iter().map(Complex64::from).collect())
    }
}

pub mod complex3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64; 3], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|c| ComplexJson::from(*c)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Complex64; 3], D::Error> {
        let v = Vec::<ComplexJson>::deserialize(d)?;
        if v.len() != 3 {
            return Err(serde::de::Error::invalid_length(v.len(), &"3 entries"));
        }
        Ok([v[0].into(), v[1].into(), v[2].into()])
    }
}

/// Hex SHA-256 over the little-endian bytes of `(re, im)` pairs.
pub fn digest_complex(values: &[Complex64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.re.to_le_bytes());
        h.update(v.im.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Child seed for a path of indices below a master seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"tps-spectra/seed");
    h.update(master.to_le_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}
