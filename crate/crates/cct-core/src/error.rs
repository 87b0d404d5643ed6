use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duration {0} is not positive")]
    InvalidDuration(f64),

    #[error("shrink factor {0} outside (0, 1]")]
    InvalidFactor(f64),

    #[error("scale factor {0} is not positive")]
    InvalidScale(f64),

    #[error("shift delta {0} is negative")]
    NegativeShift(f64),

    #[error("selector {start}..={end} out of range for {len} spans")]
    SelectorOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("sentences differ in {0}; cannot interpolate")]
    InterpolationMismatch(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite activation at layer {layer} ({stage})")]
    NonFiniteActivation { layer: usize, stage: &'static str },

    #[error("token id {id} out of range for vocab size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("archive error: {0}")]
    Archive(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("query time {t} outside integration domain ({lo}, {hi}]")]
    TimeOutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("at sweep point {value}: {source}")]
    SweepPoint {
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_sweep_point(self, value: f64) -> Error {
        Error::SweepPoint {
            value,
            source: Box::new(self),
        }
    }
}
