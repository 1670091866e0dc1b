use thiserror::Error;

/// Errors reported by the design, evaluation and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("invalid model parameter {name} = {value}: must be finite and positive")]
    InvalidModel { name: &'static str, value: f64 },

    #[error("{name} = {value} is outside {range}")]
    InvalidProbability {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("threshold ordering violated: {0}")]
    Ordering(String),

    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),

    #[error("iteration did not converge after {steps} steps (residual {residual:e})")]
    NonConvergence { steps: usize, residual: f64 },

    #[error("false-alarm rate never brackets alpha = {alpha} on lambda in [0, {lambda_max}]")]
    Bracket { alpha: f64, lambda_max: f64 },

    #[error("empty search box: {0}")]
    EmptySearch(String),

    #[error("desk-scale cap exceeded: {0}")]
    CapExceeded(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

pub type Result<T> = std::result::Result<T, FusionError>;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(FusionError::InvalidProbability {
            name: "alpha",
            value: alpha,
            range: "the open interval (0, 1)",
        })
    }
}
