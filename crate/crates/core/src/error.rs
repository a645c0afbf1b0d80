use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The behavior policy assigns zero probability to a (t, s, a) triple
    /// that carries target-policy mass, so importance weighting is undefined.
    #[error(
        "support violation at (t={t}, state={state}, action={action}): \
         behavior probability is 0 but pi * q = {mass}"
    )]
    SupportViolation {
        t: usize,
        state: usize,
        action: usize,
        mass: f64,
    },

    /// Discrete sampling-distribution analogue of [`Error::SupportViolation`].
    #[error("sampling distribution excludes index {index} which carries pi * q = {mass}")]
    SamplerSupportViolation { index: usize, mass: f64 },

    #[error("invalid trajectory: behavior probability is 0 at step {t} (state={state}, action={action})")]
    InvalidTrajectory {
        t: usize,
        state: usize,
        action: usize,
    },

    #[error("enumeration infeasible: |S|^T * |A|^T = {size:.3e} exceeds cap {cap:.1e}")]
    EnumerationInfeasible { size: f64, cap: f64 },

    #[error("training diverged in stage {stage}: non-finite weights")]
    TrainingDiverged { stage: &'static str },

    #[error("offline dataset is empty")]
    EmptyDataset,

    #[error("dataset not augmented: tuple {index} has no next action")]
    MissingAugmentation { index: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
