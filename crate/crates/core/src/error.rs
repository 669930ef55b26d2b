use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dense dimension 2^{n} exceeds the configured cap of {cap} sites")]
    DimensionOverflow { n: usize, cap: usize },

    #[error("unknown class name `{0}`")]
    UnknownClass(String),

    #[error("invalid class parameters: {0}")]
    InvalidClass(String),

    #[error("operator is not in class `{class}`: {detail}")]
    NotInClass { class: String, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (relative residual {0:.3e})")]
    NotHermitian(f64),

    #[error("eigensolver failed to converge")]
    NoConvergence,

    #[error("spectrum is degenerate: {0}")]
    DegenerateSpectrum(String),

    #[error("near-defective eigenpair (condition {condition:.3e} at index {index})")]
    DefectivePoint { index: usize, condition: f64 },

    #[error("symmetry element `{element}` is incompatible with class `{class}`")]
    IncompatibleSymmetry { element: String, class: String },

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
