use thiserror::Error;

/// Errors raised across simulation, estimation and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("particle index {index} out of range for {n} particles")]
    ParticleIndex { index: usize, n: usize },

    #[error("model `{model}` produced a non-finite value at particle {particle} (theta = {theta:?})")]
    ModelEvaluation {
        model: String,
        particle: usize,
        theta: Vec<f64>,
    },

    /// The squared diffusion coefficient must stay strictly positive.
    #[error("diffusion coefficient {value} is not strictly positive for model `{model}` at particle {particle} (theta2 = {theta2:?})")]
    NonPositiveDiffusion {
        model: String,
        particle: usize,
        theta2: Vec<f64>,
        value: f64,
    },

    #[error("simulation diverged: particle {particle} reached {value} at t = {time}")]
    SimulationDiverged {
        particle: usize,
        time: f64,
        value: f64,
    },

    #[error("degenerate panel: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge from any start (best contrast {best_value}, theta {best_theta:?})")]
    NonConvergence {
        best_theta: Vec<f64>,
        best_value: f64,
    },

    /// An asymptotic covariance block is singular or too badly conditioned to invert.
    #[error("covariance block {block} is singular (condition number {condition:e})")]
    SingularSigma { block: &'static str, condition: f64 },

    #[error("model `{0}` provides no gradients")]
    GradientUnavailable(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("panel format: {0}")]
    Format(String),

    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
