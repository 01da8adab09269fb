use thiserror::Error;

use crate::graph::Vertex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has no edges")]
    EmptyGraph,

    #[error("edge ({u}, {v}) has non-positive weight {weight}")]
    NonPositiveWeight { u: Vertex, v: Vertex, weight: f64 },

    #[error("edge ({u}, {v}) listed twice with conflicting weights {first} and {second}")]
    ConflictingEdge {
        u: Vertex,
        v: Vertex,
        first: f64,
        second: f64,
    },

    #[error("graph is disconnected: vertex {vertex} is unreachable from vertex 0")]
    Disconnected { vertex: Vertex },

    #[error("vertex id {vertex} out of range (graph has {count} vertices)")]
    InvalidVertex { vertex: Vertex, count: usize },

    #[error("radius must be at least 1, got {0}")]
    InvalidRadius(usize),

    #[error("ball B({site}, {radius}) reaches the frontier (validity radius {validity})")]
    FrontierContact {
        site: Vertex,
        radius: usize,
        validity: usize,
    },

    #[error("{steps} steps from {origin} leave the exactness window (validity radius {validity})")]
    ExactnessWindow {
        origin: Vertex,
        steps: usize,
        validity: usize,
    },

    #[error("B({site}, {radius}) covers the whole graph: the walk never exits")]
    NoExit { site: Vertex, radius: usize },

    #[error("linear solve on {unknowns} unknowns not certified: residual {residual:e}")]
    SolverFailure { unknowns: usize, residual: f64 },

    #[error("exit-time profile at {site} exhausted before exceeding n = {n}")]
    ProfileExhausted { site: Vertex, n: usize },

    #[error("e({site}, {n}) = 0: the walk cannot leave B({site}, 1) in {n} steps on average")]
    ZeroExitInverse { site: Vertex, n: usize },

    #[error("generator would produce {requested} vertices (cap {cap})")]
    SizeCap { requested: usize, cap: usize },

    #[error("no admissible cells in sweep ({skipped} skipped)")]
    EmptySweep { skipped: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that mark a sweep cell as outside the exact window
    /// (or otherwise undefined) rather than as a failed computation.
    pub fn is_inadmissible(&self) -> bool {
        matches!(
            self,
            Error::FrontierContact { .. }
                | Error::ExactnessWindow { .. }
                | Error::ProfileExhausted { .. }
                | Error::ZeroExitInverse { .. }
                | Error::NoExit { .. }
        )
    }
}
