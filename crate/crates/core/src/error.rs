use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("signal exceeds declared bound {bound} at t = {t} (norm {norm})")]
    SignalBound { t: f64, norm: f64, bound: f64 },

    #[error("decay condition violated at {x:?}: margin {margin:e}")]
    DecayViolation { x: Vec<f64>, margin: f64 },

    #[error("non-finite state at t = {t}")]
    NumericalFailure { t: f64 },

    #[error("probe region is empty: {0}")]
    EmptyProbeRegion(String),

    #[error("no positive radius makes D negative on band {band}")]
    BandInfeasible { band: String },

    #[error("refinement level {level} diverged at t = {t_bar}")]
    DivergentLevel { level: usize, t_bar: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
