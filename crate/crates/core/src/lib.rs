//! Locality classes of qubit Hamiltonians, kernel certificates for finitely
//! many isospectral local duals, complexified spectrum-matching dual search,
//! and equivalence under uniform local conjugation, chain symmetries and
//! transposition.

pub mod assignment;
pub mod class;
pub mod dual_search;
pub mod equivalence;
pub mod error;
pub mod group;
pub mod harness;
pub mod io;
pub mod json;
pub mod kernel;
pub mod models;
pub mod operator;
pub mod pauli;
pub mod spectra;

pub use class::{dim_local_space, ClassKind, LocalityClass, SymmetryDescriptor};
pub use error::{Error, Result};
pub use kernel::{certify_finite_duals, CertificateReport, CertifyOptions, Verdict};
pub use operator::{OperatorExpr, PauliSum};
pub use pauli::PauliString;
pub use spectra::{eig_general, eigh, spectral_distance, EigenSystem, Spectrum};
