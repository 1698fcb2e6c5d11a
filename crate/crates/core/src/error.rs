use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{atoms} atoms exceeds the dimension cap of {cap} atoms")]
    DimensionOverflow { atoms: u32, cap: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("grid side {q} does not divide matrix dimension {dim}")]
    Indivisible { q: usize, dim: usize },

    #[error("block grids disagree: {0}")]
    GridMismatch(String),

    #[error("block ({row}, {col}) is missing from the grid")]
    MissingBlock { row: usize, col: usize },

    #[error("{requested} workers requested but the pool is capped at {cap}")]
    WorkersUnavailable { requested: usize, cap: usize },

    #[error("worker failure: {0}")]
    WorkerFailed(String),

    #[error("Hermitian eigendecomposition did not converge")]
    EigenFailure,

    #[error("matrix is not anti-Hermitian (defect {defect:e})")]
    NotAntiHermitian { defect: f64 },

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("trace drifted to {trace} at t = {time}; reduce dt or raise the Taylor order")]
    TraceDrift { trace: f64, time: f64 },

    #[error("no serial timing for dimension {0}")]
    MissingBaseline(usize),

    #[error("malformed trajectory CSV: {0}")]
    MalformedCsv(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
