use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too narrow: boundary density {density:.3e} exceeds {threshold:.0e}")]
    GridTooNarrow { density: f64, threshold: f64 },

    #[error("grid too coarse: discrete norm {norm:.9} deviates from 1")]
    GridTooCoarse { norm: f64 },

    #[error("unstable order: photon number {n} exceeds the Hermite recursion cap {max}")]
    UnstableOrder { n: usize, max: usize },

    #[error("unsupported state kind for this operation: {0}")]
    UnsupportedKind(String),

    #[error("grid too large: {0}")]
    GridTooLarge(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("moment order {0} too high (m + n must be <= 4)")]
    OrderTooHigh(usize),

    #[error("no measurement angles given")]
    EmptyAngles,

    #[error("angle {0} deg outside [0, 180)")]
    AngleOutOfRange(f64),

    #[error("noise sigma must be non-negative, got {0}")]
    NegativeSigma(f64),

    #[error("filtered back-projection needs at least 2 angles, got {0}")]
    TooFewAngles(usize),

    #[error("invalid cutoff k_c = {0}")]
    InvalidCutoff(f64),

    #[error("projector bank dimension {dim} exceeds the limit {max}")]
    DimTooLarge { dim: usize, max: usize },

    #[error("estimator diverged: {0}")]
    Diverged(String),

    #[error("empty dataset")]
    EmptyData,

    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),

    #[error("state kind {0} is not Gaussian")]
    NotGaussian(String),

    #[error("bad partition: {0}")]
    BadPartition(String),

    #[error("bad subsystem dimensions: {0}")]
    BadDims(String),

    #[error("bad file: {0}")]
    BadFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
