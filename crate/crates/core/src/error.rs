use thiserror::Error;

#[derive(Debug, Error)]
pub enum GvsError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("numeric guard: alpha_bar {alpha_bar} is below the clamp floor {floor}")]
    NumericGuard { alpha_bar: f64, floor: f64 },

    #[error("window of {slots} slots exceeds the denoiser context length {context}")]
    Capacity { slots: usize, context: usize },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("non-finite values at step {step}, chunk {chunk}")]
    NumericFailure { step: usize, chunk: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("unknown trajectory `{0}`")]
    UnknownTrajectory(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GvsError>;
