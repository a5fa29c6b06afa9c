use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid characteristics: {0}")]
    InvalidCharacteristics(String),

    #[error("quadrature did not converge on [{lo}, {hi}] (estimates {coarse} vs {fine})")]
    Quadrature {
        lo: f64,
        hi: f64,
        coarse: f64,
        fine: f64,
    },

    #[error("cell index {index} out of range 1..={max}")]
    CellOutOfRange { index: usize, max: usize },

    #[error("time {0} outside (0, T]")]
    TimeOutOfRange(f64),

    #[error("paths live on different grids")]
    GridMismatch,

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("coefficient evaluation failed at t = {t}: {message}")]
    Evaluation { t: f64, message: String },

    #[error("rng streams must be distinct (both use stream {0})")]
    SameStream(u64),

    #[error("mask is set at t = {0} but sigma evaluates to zero")]
    MaskInconsistent(f64),

    #[error("not enough samples: {got} < {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
