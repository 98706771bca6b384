use thiserror::Error;

use crate::diagnostics::MonotonicityReport;
use crate::homeomorphize::ChainReport;
use crate::psolver::PSolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate triangle {triangle}: signed area {area:e}")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("nonpositive jacobian on {} triangle(s), first offenders {:?}", triangles.len(), &triangles[..triangles.len().min(8)])]
    Orientation { triangles: Vec<usize> },

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("p-harmonic solve did not converge after {} iterations (gradient norm {:e})", report.iterations, report.final_gradient_norm)]
    NotConverged { report: Box<PSolveReport> },

    #[error("point ({x}, {y}) lies outside the domain of {what}")]
    Domain { what: String, x: f64, y: f64 },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("boundary trace inconsistent with cell: {0}")]
    Consistency(String),

    #[error("input map is not discretely monotone: {} of {} sampled fibers are disconnected", report.failing_count(), report.sampled_points.len())]
    NotMonotone { report: Box<MonotonicityReport> },

    #[error("chain aborted at step {step} (cell {cell}): {source}")]
    ChainAborted {
        step: usize,
        cell: usize,
        #[source]
        source: Box<Error>,
        partial: Box<ChainReport>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
