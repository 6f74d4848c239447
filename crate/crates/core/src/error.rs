use thiserror::Error;

/// Errors raised across the model, control, analysis and verification layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("vaccination channel gain zero (mu * N = 0)")]
    ZeroChannelGain,

    #[error("control law rejected: {0}")]
    InvalidLaw(String),

    #[error("gain constraint violated: {0}")]
    GainConstraint(String),

    #[error("no closed-form prediction for law `{0}`")]
    NoPrediction(String),

    #[error("initial state sums to {sum} but N = {n}")]
    NotConserved { sum: f64, n: f64 },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite state at step {step} (t = {t})")]
    Diverged { step: usize, t: f64 },

    #[error("adaptive step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("endemic analysis requires sigma equals gamma (sigma = {sigma}, gamma = {gamma})")]
    SigmaGammaMismatch { sigma: f64, gamma: f64 },

    #[error("undefined: {0}")]
    Undefined(&'static str),

    #[error("frequency sweep refused: {0}")]
    SweepRefused(&'static str),

    #[error("trajectory unusable: {0}")]
    BadTrajectory(String),

    #[error("horizon too short: need t_end >= {required_t_end}")]
    HorizonTooShort { required_t_end: f64 },

    #[error("decay fit refused: {0}")]
    BadSeries(String),
}

pub type Result<T> = std::result::Result<T, Error>;
