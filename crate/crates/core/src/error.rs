use crate::linalg::Point;
use thiserror::Error;

/// Mesh assumptions that construction and validation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Simplicial partition of the inner region.
    M1,
    /// Conforming, admissible partition of the complement.
    M2,
    /// Facet bookkeeping.
    M3,
    /// Interface facets separate the two regions.
    M4,
    /// Interface-facet vertices lie on the initial interface.
    M5,
    /// Lagrange nodes shared between neighbours.
    M6,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("point {0:?} lies outside the reference simplex")]
    OutsideReference(Point),

    #[error("degenerate simplex (zero measure)")]
    DegenerateSimplex,

    #[error("closest-point projection of {point:?} at t={t} did not converge after {iterations} iterations")]
    ClosestPoint { point: Point, t: f64, iterations: usize },

    #[error("level-set gradient vanishes at {0:?}")]
    VanishingGradient(Point),

    #[error("mesh violates {assumption}: {detail}")]
    Mesh { assumption: Assumption, detail: String },

    #[error("element {element} is inverted (det = {det:e}) at t={t}")]
    InvertedElement { element: usize, det: f64, t: f64 },

    #[error("reference-map inversion failed in element {element} for point {point:?}")]
    MapInversion { element: usize, point: Point },

    #[error("flow map is singular at {point:?} (t={t}): {reason}")]
    SingularFlow { point: Point, t: f64, reason: String },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("insufficient history: {0}")]
    History(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn mesh(assumption: Assumption, detail: impl Into<String>) -> Self {
        Error::Mesh { assumption, detail: detail.into() }
    }

    /// Whether this error (or the step error it wraps) came from the linear solver.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Solver(_) => true,
            Error::Step { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }

    pub fn is_validation_failure(&self) -> bool {
        match self {
            Error::Mesh { .. } | Error::InvertedElement { .. } | Error::Parse { .. } => true,
            Error::Step { source, .. } => source.is_validation_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
