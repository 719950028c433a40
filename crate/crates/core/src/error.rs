use thiserror::Error;

/// Errors raised by mesh ingestion, geometry, flow integration and spectral solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-manifold edge ({a}, {b}): {count} incident faces")]
    NonManifold { a: usize, b: usize, count: usize },

    #[error("inconsistent orientation on edge ({a}, {b})")]
    Orientation { a: usize, b: usize },

    #[error("degenerate face {face}: {reason}")]
    DegenerateFace { face: usize, reason: String },

    #[error("degenerate triangle with side lengths ({0}, {1}, {2})")]
    DegenerateTriangle(f64, f64, f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Euler characteristic {chi} is not negative; the normalized flow requires chi < 0")]
    NonNegativeEuler { chi: i64 },

    #[error("time step underflow: dt {dt:e} fell below dt_min {dt_min:e} at t = {t} (offending face {face})")]
    DtUnderflow { dt: f64, dt_min: f64, t: f64, face: usize },

    #[error("eigensolver did not converge in {iterations} iterations (worst relative residual {residual:e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("flow trace is not converged")]
    NotConverged,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
