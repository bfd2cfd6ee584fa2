use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("point {point:?} is outside the projection domain of {target}")]
    ProjectionDomain { target: String, point: Vec<f64> },
    #[error("projection did not converge for {target} after {iterations} iterations (residual {residual:e})")]
    ProjectionNonConvergence {
        target: String,
        iterations: usize,
        residual: f64,
    },
    #[error("point is off the target manifold (distance {distance:e})")]
    OffManifold { distance: f64 },
    #[error("eigenvalue iteration did not converge after {0} iterations")]
    EigenNonConvergence(usize),
    #[error("step failure at t = {t}: dt {dt:e} fell below dt_min {dt_min:e} (last sup|∂t u| = {last_residual:e})")]
    StepFailure {
        t: f64,
        dt: f64,
        dt_min: f64,
        last_residual: f64,
    },
    #[error("invalid field data: {0}")]
    InvalidField(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient snapshots: need {need}, got {got}")]
    InsufficientSnapshots { need: usize, got: usize },
    #[error("radius {radius} exceeds the admissible radius {limit} of the domain")]
    RadiusExceedsDomain { radius: f64, limit: f64 },
    #[error("configuration errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
