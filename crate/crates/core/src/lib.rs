//! Exact heat kernels, mean exit times, kernel functions and Harnack-type
//! condition checks on weighted graphs, with verifiers for local on- and
//! off-diagonal heat kernel estimates.

pub mod conditions;
pub mod error;
pub mod estimates;
pub mod exit_time;
pub mod format;
pub mod generators;
pub mod graph;
pub mod heat;
pub mod kernels;
pub mod rng;
pub mod serde_ext;
pub mod solve;

pub use error::{Error, Result};
pub use exit_time::{ExitTimeCache, ExitTimeProfile, ExitTimes, ScaleFunction};
pub use graph::{build_graph, BallView, GraphMeta, Vertex, WeightedGraph};
pub use heat::{HeatPropagator, HeatState};
