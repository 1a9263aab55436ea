use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice size must be at least 2, got {0}")]
    InvalidSize(usize),

    #[error("invalid interaction: {0}")]
    InvalidInteraction(String),

    #[error("invalid bath: {0}")]
    InvalidBath(String),

    #[error("explicit-rate bath defines no rate at energy {0} (only 0 and +/-2J)")]
    UnsupportedEnergy(f64),

    #[error("odd number of anyons ({0}) has no perfect matching")]
    InvalidSyndrome(usize),

    #[error("matching graph admits no perfect matching")]
    InfeasibleMatching,

    #[error("trajectories were recorded on different sample schedules")]
    ScheduleMismatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("integral of 1/r^alpha over the unit square diverges for alpha = {0}")]
    DivergentIntegral(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resonant cavity modes (omega1 == omega2 = {0}): second-order coefficient diverges")]
    Resonance(f64),

    #[error("need at least {need} data points, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
