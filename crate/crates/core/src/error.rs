use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular design matrix in {0} fit")]
    SingularDesign(&'static str),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("total hemoglobin is zero; StO2 undefined")]
    ZeroHemoglobin,
    #[error("insufficient frames: need {needed}, video has {available}")]
    InsufficientFrames { needed: usize, available: usize },
    #[error("label rate {0} Hz is too low for the 0.025 Hz low-pass filter")]
    RateTooLow(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("session {0} has no color checker reading and no dataset-level reference")]
    MissingColorcheck(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    EmptySeries,
    #[error("truth value at index {0} is zero; MAPE undefined")]
    ZeroTruth(usize),
    #[error("LOSO needs at least two subjects")]
    SingleSubject,
    #[error("dataset {0} appears in both training and test sets")]
    DatasetOverlap(String),
    #[error("no metadata for sessions: {0:?}")]
    MissingMetadata(Vec<String>),
    #[error("missing labels file {0}")]
    MissingLabels(PathBuf),
    #[error("frame numbering gap in {dir}: expected {expected:06}, found {found:06}")]
    FrameGap { dir: PathBuf, expected: usize, found: usize },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularDesign(_) => "SingularDesign",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::ZeroHemoglobin => "ZeroHemoglobin",
            Error::InsufficientFrames { .. } => "InsufficientFrames",
            Error::RateTooLow(_) => "RateTooLow",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::MissingColorcheck(_) => "MissingColorcheck",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::EmptySeries => "EmptySeries",
            Error::ZeroTruth(_) => "ZeroTruth",
            Error::SingleSubject => "SingleSubject",
            Error::DatasetOverlap(_) => "DatasetOverlap",
            Error::MissingMetadata(_) => "MissingMetadata",
            Error::MissingLabels(_) => "MissingLabels",
            Error::FrameGap { .. } => "FrameGap",
            Error::Parse { .. } => "Parse",
            Error::Invalid(_) => "Invalid",
            Error::UnknownConfigKey(_) => "UnknownConfigKey",
            Error::Io { .. } => "Io",
            Error::Image { .. } => "Image",
            Error::Json { .. } => "Json",
        }
    }
}
