//! Sparse neighborhood graph (SNG) indexing for approximate nearest neighbor search.
//!
//! The crate covers the full pipeline around an α-pruned proximity graph:
//!
//! - [`vecmath`]: distance kernels, ball sampling, the regularized incomplete
//!   Beta function and the single-step pruning probability.
//! - [`dataset`]: the point container, `fvecs`/`ivecs` I/O, synthetic
//!   generators and exact k-NN ground truth.
//! - [`graph`]: SNG pruning, RobustPrune, Vamana construction, beam search
//!   and graph persistence.
//! - [`tuner`]: truncation-parameter optimization from a probe build and the
//!   construction cost model.
//! - [`instrument`]: pruning traces, first-passage levels, degree/path
//!   statistics and recall.
//! - [`bench`] and [`experiments`]: the recall/latency sweep, the
//!   search-guided reference tuner and the verification experiments used by
//!   the `sng` binary.

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod instrument;
pub mod tuner;
pub mod vecmath;

pub use dataset::{GroundTruth, VectorDataset};
pub use error::{Error, Result};
pub use graph::{BuildKind, BuildParams, SearchResult, SngGraph};
pub use instrument::PruningTrace;
pub use tuner::TuneReport;
