//! Compressive sensing for Hadamard-Haar systems.
//!
//! Fast Paley-Hadamard and Haar transforms, the level partitions that expose
//! the block-diagonal structure of the Hadamard-Haar product, closed-form and
//! brute-force coherence, variable and multilevel density sampling, and
//! l1 recovery.

pub mod coherence;
pub mod error;
pub mod indexing;
pub mod io;
pub mod recovery;
pub mod sampling;
pub mod signals;
pub mod transforms;

pub use error::{Error, Result};

/// Library version recorded in experiment provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
