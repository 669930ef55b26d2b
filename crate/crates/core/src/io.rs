//! Versioned operator and spectrum files.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::class::LocalityClass;
use crate::error::{Error, Result};
use crate::json::ComplexJson;
use crate::operator::{OperatorExpr, PauliSum};
use crate::pauli::PauliString;
use crate::spectra::Spectrum;

pub const OPERATOR_FORMAT: &str = "tps-spectra/operator.v1";
pub const SPECTRUM_FORMAT: &str = "tps-spectra/spectrum.v1";

/// Relative out-of-class residual tolerated when loading grouped classes.
pub const LOAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermJson {
    pub letters: Vec<u8>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub format: String,
    pub n: usize,
    pub d: usize,
    pub class: ClassRef,
    pub terms: Vec<TermJson>,
    #[serde(default)]
    pub meta: OperatorMeta,
}

impl OperatorFile {
    /// Pauli expansion of `expr`, zero terms dropped, in string order.
    pub fn from_expr(expr: &OperatorExpr, seed: Option<u64>) -> Self {
        let kind = expr.class().kind();
        let terms = expr
            .pauli_sum()
            .iter()
            .filter(|(_, c)| **c != Complex64::new(0.0, 0.0))
            .map(|(p, c)| TermJson { letters: p.letters(), re: c.re, im: c.im })
            .collect();
        Self {
            format: OPERATOR_FORMAT.into(),
            n: expr.n(),
            d: 2,
            class: ClassRef { name: kind.name().into(), k: kind.k() },
            terms,
            meta: OperatorMeta { seed },
        }
    }

    pub fn to_expr(&self) -> Result<OperatorExpr> {
        self.to_expr_located(|_| String::new())
    }

    /// `locate(i)` describes where term `i` sits in the source text.
    fn to_expr_located(&self, locate: impl Fn(usize) -> String) -> Result<OperatorExpr> {
        if self.format != OPERATOR_FORMAT {
            return Err(Error::Format(format!("unsupported format `{}`, expected `{OPERATOR_FORMAT}`", self.format)));
        }
        if self.d != 2 {
            return Err(Error::Format(format!("local dimension {} is not supported, only d = 2", self.d)));
        }
        let mut strings = Vec::with_capacity(self.terms.len());
        let mut seen = BTreeSet::new();
        for (i, t) in self.terms.iter().enumerate() {
            if t.letters.len() != self.n {
                return Err(Error::Format(format!("{}term {i} has {} letters for n = {}", locate(i), t.letters.len(), self.n)));
            }
            let p = PauliString::from_letters(&t.letters)
                .ok_or_else(|| Error::Format(format!("{}term {i} has a letter outside 0..=3", locate(i))))?;
            if !t.re.is_finite() || !t.im.is_finite() {
                return Err(Error::Format(format!("{}term {i} has a non-finite coefficient", locate(i))));
            }
            if !seen.insert(p) {
                return Err(Error::Format(format!("{}term {i} repeats string {p}", locate(i))));
            }
            strings.push(p);
        }
        let class = if self.class.name.replace('-', "_") == "custom" {
            LocalityClass::custom(self.n, &strings)?
        } else {
            LocalityClass::build(&self.class.name, self.n, self.class.k)?
        };
        for (i, p) in strings.iter().enumerate() {
            if !class.contains_string(p) {
                return Err(Error::NotInClass {
                    class: class.kind().to_string(),
                    detail: format!("{}term {i} ({p}) is outside the class basis", locate(i)),
                });
            }
        }
        let sum = PauliSum::from_terms(
            self.n,
            strings.iter().zip(&self.terms).map(|(p, t)| (*p, Complex64::new(t.re, t.im))),
        );
        OperatorExpr::from_pauli_sum(Arc::new(class), &sum, LOAD_TOL)
    }
}

/// 1-based line of the `index`-th occurrence of `needle`.
fn line_of_occurrence(text: &str, needle: &str, index: usize) -> Option<usize> {
    let (pos, _) = text.match_indices(needle).nth(index)?;
    Some(text[..pos].matches('\n').count() + 1)
}

/// Parses an operator file. Messages for malformed input name the line.
pub fn parse_operator(text: &str) -> Result<(OperatorExpr, OperatorFile)> {
    let file: OperatorFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let expr = file.to_expr_located(|i| match line_of_occurrence(text, "\"letters\"", i) {
        Some(line) => format!("line {line}: "),
        None => String::new(),
    })?;
    Ok((expr, file))
}

pub fn operator_to_json(expr: &OperatorExpr, seed: Option<u64>) -> String {
    to_pretty(&OperatorFile::from_expr(expr, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumFile {
    pub format: String,
    pub n_dim: usize,
    pub hermitian: bool,
    pub values: Vec<ComplexJson>,
}

impl SpectrumFile {
    pub fn from_spectrum(s: &Spectrum) -> Self {
        Self {
            format: SPECTRUM_FORMAT.into(),
            n_dim: s.len(),
            hermitian: s.is_hermitian(),
            values: s.values().iter().map(|v| ComplexJson::from(*v)).collect(),
        }
    }

    pub fn to_spectrum(&self) -> Result<Spectrum> {
        if self.format != SPECTRUM_FORMAT {
            return Err(Error::Format(format!("unsupported format `{}`, expected `{SPECTRUM_FORMAT}`", self.format)));
        }
        if self.values.len() != self.n_dim {
            return Err(Error::Format(format!("{} values for n_dim = {}", self.values.len(), self.n_dim)));
        }
        Spectrum::new(self.values.iter().map(|v| Complex64::from(*v)).collect(), self.hermitian)
    }
}

pub fn parse_spectrum(text: &str) -> Result<Spectrum> {
    let file: SpectrumFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    file.to_spectrum()
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
