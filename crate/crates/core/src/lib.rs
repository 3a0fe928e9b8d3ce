//! Distributed K-SVD dictionary learning over a simulated node network.
//!
//! Nodes hold disjoint column blocks of a signal matrix (typically the
//! overlapping patches of a grayscale image). Each node sparse-codes its own
//! signals with OMP and all nodes update the dictionary atom by atom: the
//! rank-1 direction of the combined residual is found with a power method
//! whose matrix-vector products are averaged over the network by consensus,
//! so no raw data leaves a node.
//!
//! Module map:
//! - [`imaging`]: PGM/PNG I/O, decimation, noise, patch extraction and reassembly
//! - [`sparse_coding`]: OMP, batch and shared-support pursuit, `DX`
//! - [`consensus`]: graphs, doubly-stochastic weights, synchronous rounds with failures
//! - [`power_method`]: consensus-embedded dominant eigenvector
//! - [`ksvd`]: the learning loop (cloud and local variants)
//! - [`metrics`]: MSE, PSNR, SSIM, dictionary divergence
//! - [`runner`]: experiment configs, pipeline, CSV/image outputs

pub mod consensus;
pub mod error;
pub mod exec;
pub mod imaging;
pub mod ksvd;
pub mod metrics;
pub mod power_method;
pub mod rng;
pub mod runner;
pub mod sparse_coding;

pub use error::{Error, Result};
pub use exec::Execution;
