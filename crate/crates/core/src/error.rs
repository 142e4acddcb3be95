use thiserror::Error;

/// Errors produced by the estimation, propagation and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("covariance is not positive semidefinite: {0}")]
    InvalidCovariance(String),
    #[error("bearing {0:?} is too close to the antipode of the z-axis for alignment")]
    DegenerateAlignment([f64; 3]),
    #[error("sample at ({x:.3}, {y:.3}) lies outside the {width}x{height} patch")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("patch has no usable gradient; the position is unconstrained")]
    DegeneratePatch,
    #[error("residual variance vanished (sigma^2 = {0:e}); use a positive regularization")]
    Singularity(f64),
    #[error("weight {value} at index {index} is not strictly positive")]
    InvalidWeight { index: usize, value: f64 },
    #[error("directional limit undefined: zero denominator along the approach direction")]
    UndefinedLimit,
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: &'static str, detail: String },
    #[error("instance generation failed after {0} retries")]
    GenerationFailed(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
