//! Arithmetic core for robust packed secure aggregation.

pub mod dotprod;
pub mod exec;
pub mod field;
pub mod linalg;
pub mod packed;
pub mod poly;
pub mod rs;
pub mod vss;

pub use exec::Exec;
pub use field::{Field, Fp, F61};
