use thiserror::Error;

use crate::geometry::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("empty grid: no lattice point with spacing {h} lies strictly inside the domain")]
    EmptyGrid { h: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{solver} did not converge after {iterations} iterations (last residual {last:.3e})")]
    Nonconvergence {
        solver: &'static str,
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("convexity failure: {0}")]
    ConvexityFailure(String),

    #[error("degenerate operator at node {node} ({point}): {reason}")]
    DegenerateOperator {
        node: usize,
        point: Point,
        reason: String,
    },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("degenerate section: {0}")]
    DegenerateSection(String),

    #[error("point {0} is too close to the boundary to resolve its maximal section")]
    TooCloseToBoundary(Point),

    #[error("convexity violation: separation {separation:.3e} at {point} is below tolerance {tolerance:.3e}")]
    ConvexityViolation {
        point: Point,
        separation: f64,
        tolerance: f64,
    },

    #[error("point {0} lies outside the sampled data")]
    OutOfDomain(Point),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid profile: {0}")]
    NonConvexProfile(String),

    #[error("invalid shear: det A = {0}, expected 1")]
    InvalidShear(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Input-validation errors, as opposed to numerical failures.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidDomain(_)
                | Error::EmptyGrid { .. }
                | Error::InvalidGrid(_)
                | Error::InvalidField(_)
                | Error::IncompleteData(_)
                | Error::InvalidProblem(_)
                | Error::NonConvexProfile(_)
                | Error::InvalidShear(_)
        )
    }

    /// Numerical failures of an iterative solve.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Nonconvergence { .. }
                | Error::ConvexityFailure(_)
                | Error::DegenerateOperator { .. }
                | Error::LinearSolver(_)
        )
    }
}
