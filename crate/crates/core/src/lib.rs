//! Non-self-adjoint h-tridiagonal operators on biorthogonal bases.
//!
//! Bands, ladder factorizations and SUSY partners, two-sided eigen-recurrences,
//! a handful of concrete models, and dense cross-check oracles.

pub mod band;
pub mod dense;
pub mod factorization;
pub mod models;
pub mod oracle;
pub mod recurrence;
pub mod seq;
pub mod verify;

pub use num_complex::Complex64 as C64;

pub use band::{BandError, BandSpec, TruncatedMatrix};
pub use dense::DenseMatrix;
pub use factorization::{FactorError, FactorizationSpec};
pub use models::{ModelDescriptor, ModelError, ModelName};
pub use recurrence::{EigenPacket, RecurrenceError, Side};
pub use seq::ComplexSeq;
