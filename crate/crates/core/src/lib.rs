//! Finite-field secure aggregation with nearest-neighbour mixing and
//! Byzantine-robust selection.

pub mod attacks;
pub mod audit;
pub mod error;
pub mod field;
pub mod party;
pub mod poly;
pub mod protocol;
pub mod quant;
pub mod robust;
pub mod rs;
pub mod sharing;
pub mod stats;
pub mod zo;

pub use error::{Error, Result};
pub use field::{FieldElement, PrimeField};
pub use party::{ClientId, Party};
pub use poly::Polynomial;
pub use quant::{QuantConfig, QuantizedGradient};
