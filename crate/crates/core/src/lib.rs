//! A repository of classification models for multi-source entity resolution.
//!
//! Entity resolution (ER) between a pair of data sources reduces to a binary
//! classification task over similarity feature vectors. When many sources are
//! integrated, the number of pairwise ER problems grows quadratically and
//! labeling training data for each one becomes the bottleneck. This crate
//! groups ER problems by the shape of their per-feature similarity
//! distributions, trains one budget-constrained classifier per group, and
//! routes new problems to the best existing model — retraining only when the
//! group no longer covers them.
//!
//! The pipeline:
//!
//! 1. [`er`] — dataset ingestion, validation, and the source-pair split.
//! 2. [`dist`] — per-feature distribution statistics (KS / Wasserstein / PSI)
//!    aggregated into a problem-pair similarity.
//! 3. [`graph`] — the weighted problem graph and Leiden clustering.
//! 4. [`classifier`] — bagged CART ensembles used per cluster.
//! 5. [`active`] — budget allocation and bootstrap-uncertainty active learning.
//! 6. [`repository`] — the persistent model store and the two serving
//!    strategies (`sel_base`, `sel_cov`).
//! 7. [`eval`] — metrics, a synthetic corpus generator, and experiment drivers.
//!
//! Numeric kernels (distribution statistics, trees, modularity) are generic
//! over the scalar type via [`num::Real`]; the pipeline itself runs on
//! [`Value`] (`f64`).

pub mod active;
pub mod classifier;
pub mod dist;
pub mod er;
pub mod error;
pub mod eval;
pub mod graph;
pub mod num;
pub mod repository;
pub mod rng;

/// Scalar type used by the concrete pipeline.
pub type Value = f64;

/// Tool version stamp embedded in repository archives.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
