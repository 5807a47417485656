//! Periodic Pólya urns: exact finite-time laws, limit laws, martingale tail sums, and the
//! growth processes (increasing trees with immigration, periodic Stirling permutations,
//! restaurant processes with competition) that they describe.

pub mod error;
pub mod format;
pub mod growth;
pub mod laws;
pub mod martingale;
pub mod moments;
pub mod param;
mod precise;
pub mod rng;
pub mod special;
pub mod urn;

pub use error::{Error, Result};
pub use param::Param;
pub use special::ExactRational;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
