use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iteration (truncation doubling, root refinement, bisection) ran out
    /// of budget before meeting its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Inverse iteration did not produce a null vector.
    #[error("energy {energy} is not a root: residual {residual:e}")]
    NotARoot { energy: String, residual: f64 },

    /// Root iterates left the caller-supplied search region.
    #[error("iterate {0} escaped the search region")]
    Escaped(String),

    /// A complex root turned up where self-adjointness forbids one.
    #[error("rejected root {energy}: {reason}")]
    RejectedRoot { energy: String, reason: String },

    /// A pole was lost while continuing a trajectory.
    #[error("tracking lost at lambda = {lambda}: {source}")]
    TrackingLost {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    /// Truncated linear system is numerically singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// A zero sits on the counting contour even after perturbation.
    #[error("zero on contour: {0}")]
    ContourAmbiguity(String),

    /// Degenerate input to a regression or grid routine.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NonConvergence(_) => "non_convergence",
            Error::NotARoot { .. } => "not_a_root",
            Error::Escaped(_) => "escaped",
            Error::RejectedRoot { .. } => "rejected_root",
            Error::TrackingLost { .. } => "tracking_lost",
            Error::Singular(_) => "singular",
            Error::ContourAmbiguity(_) => "contour_ambiguity",
            Error::Degenerate(_) => "degenerate",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
