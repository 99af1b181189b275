use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty trace list")]
    EmptyTraces,

    #[error("trace for occupant {occupant} references zone index {zone} (zone count {zones})")]
    ZoneOutOfRange {
        occupant: String,
        zone: usize,
        zones: usize,
    },

    #[error("traces have mismatched lengths ({expected} vs {found})")]
    LengthMismatch { expected: usize, found: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e}); chain may be reducible or periodic")]
    NoStationaryDistribution { iterations: usize, residual: f64 },

    #[error("state space of {size} exceeds enumeration cap {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },

    #[error("unphysical thermal parameters: nonpositive denominator {0}")]
    Unphysical(f64),

    #[error("observations are impossible under the model at step {step}")]
    ImpossibleObservation { step: usize },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
