//! Distance comparison operations for approximate nearest-neighbor search.
//!
//! The crate bundles eight strategies for deciding whether a candidate lies
//! within a distance threshold of the query, the preprocessing they rely on
//! (PCA, random rotations, product quantization, trained linear models), the
//! HNSW and IVF indexes that call them, and a benchmark harness.

pub mod bench;
pub mod cli;
pub mod dco;
pub mod error;
pub mod index;
pub mod io;
pub mod kmeans;
pub mod quantize;
pub mod sidecar;
pub mod train;
pub mod transform;
pub mod vector;

pub use error::{Error, Result};
