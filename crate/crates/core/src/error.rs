use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gradient of the invariant vanishes near {0:?} (|grad I| = {1:.3e})")]
    SingularGradient([f64; 3], f64),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("level V = {0} has no compact component")]
    EmptyComponent(f64),

    #[error("orbit left the domain box at step {step}")]
    EscapedDomain { step: usize },

    #[error("period-two curve has a pole at x = 1/2")]
    PoleAtHalf,

    #[error("Newton matrix is singular (condition {0:.3e})")]
    SingularJacobian(f64),

    #[error("two eigenvalues near 1 align with the invariant gradient")]
    AmbiguousNeutral,

    #[error("periodic orbit is not hyperbolic (trace {0:.6})")]
    NotHyperbolic(f64),

    #[error("arc entered the excision ball around singular point {0:?}")]
    SingularityApproach([f64; 3]),

    #[error("continuation branch lost at V = {0}")]
    BranchLost(f64),

    #[error("torus seed passes within {distance:.3e} of a singular point")]
    NearSingularSeed { distance: f64 },

    #[error("quadratic fit residual {0:.3e} exceeds tolerance")]
    PoorFit(f64),

    #[error("presentation has no gaps")]
    NoGaps,

    #[error("presentation hull is degenerate")]
    DegenerateHull,

    #[error("box counting needs at least {needed} scales, got {got}")]
    InsufficientScales { needed: usize, got: usize },

    #[error("no subinterval survives the avoidance constraint")]
    EverythingDies,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::InvalidArgument(_)
                | Error::EmptyComponent(_)
                | Error::PoleAtHalf
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::SingularGradient(..) => "SingularGradient",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::EmptyComponent(_) => "EmptyComponent",
            Error::EscapedDomain { .. } => "EscapedDomain",
            Error::PoleAtHalf => "PoleAtHalf",
            Error::SingularJacobian(_) => "SingularJacobian",
            Error::AmbiguousNeutral => "AmbiguousNeutral",
            Error::NotHyperbolic(_) => "NotHyperbolic",
            Error::SingularityApproach(_) => "SingularityApproach",
            Error::BranchLost(_) => "BranchLost",
            Error::NearSingularSeed { .. } => "NearSingularSeed",
            Error::PoorFit(_) => "PoorFit",
            Error::NoGaps => "NoGaps",
            Error::DegenerateHull => "DegenerateHull",
            Error::InsufficientScales { .. } => "InsufficientScales",
            Error::EverythingDies => "EverythingDies",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
