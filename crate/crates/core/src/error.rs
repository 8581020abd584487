use thiserror::Error;

pub type Result<T, E = RceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RceError {
    #[error("{what} index {index} out of range (must be < {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("deviation from action {0} to itself is vacuous")]
    VacuousDeviation(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("round counter must be at least 1")]
    ZeroRound,

    #[error("regret entry {index} is negative ({value})")]
    NegativeRegret { index: usize, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{count} subsets to check exceeds the cap of {cap}")]
    SubsetCapExceeded { count: u128, cap: u128 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| RceError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn check_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index < limit {
        Ok(())
    } else {
        Err(RceError::IndexOutOfRange { what, index, limit })
    }
}
