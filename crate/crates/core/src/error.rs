use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a RIFF/WAVE file: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: format tag {format_tag}, {bits} bits")]
    UnsupportedEncoding { format_tag: u16, bits: u16 },
    #[error("data chunk declares {declared} bytes but only {available} are present")]
    TruncatedData { declared: usize, available: usize },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("signal contains no samples")]
    EmptySignal,
    #[error("non-finite sample at channel {channel}, index {index}")]
    NonFinite { channel: usize, index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("spectrogram was produced with a different STFT configuration")]
    ConfigMismatch,
    #[error("requested length {requested} exceeds the reconstructable extent {available}")]
    LengthExceedsExtent { requested: usize, available: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("at most {max} channels are supported, got {got}")]
    TooManyChannels { got: usize, max: usize },
    #[error("mixture covariance is singular at frame {frame}, bin {bin}; eps is too small for the input scale")]
    SingularMixCovariance { frame: usize, bin: usize },
    #[error("negative weight {value} for model {model}, source {source_name}")]
    NegativeWeight {
        model: usize,
        source_name: String,
        value: f64,
    },
    #[error("weights for source {source_name} sum to {sum}, expected 1")]
    ColumnSumViolation { source_name: String, sum: f64 },
    #[error("sample rate mismatch: {expected} Hz vs {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("{weights} weight rows for {models} models")]
    ModelCountMismatch { models: usize, weights: usize },
    #[error("pipeline has {models} models but the weights describe {weights}")]
    WeightModelMismatch { models: usize, weights: usize },
    #[error("reference for source {0} is silent")]
    SilentReference(usize),
    #[error("length mismatch: {expected} vs {got} samples")]
    LengthMismatch { expected: usize, got: usize },
    #[error("projection Gram matrix is rank deficient")]
    RankDeficient,
    #[error("no inputs to aggregate")]
    EmptyInput,
    #[error("input length {0} is incompatible with the convolution stack")]
    LengthIncompatible(usize),
    #[error("missing stem {stem} in {dir}")]
    MissingStem { dir: PathBuf, stem: String },
    #[error("malformed magnitude file: {0}")]
    MalformedMagnitudes(String),
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable identifier printed by the CLI in front of the human-readable message.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::UnsupportedEncoding { .. } => "UnsupportedEncoding",
            Error::TruncatedData { .. } => "TruncatedData",
            Error::Io { .. } => "IoFailure",
            Error::EmptySignal => "EmptySignal",
            Error::NonFinite { .. } => "NonFinite",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ConfigMismatch => "ConfigMismatch",
            Error::LengthExceedsExtent { .. } => "LengthExceedsExtent",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::TooManyChannels { .. } => "TooManyChannels",
            Error::SingularMixCovariance { .. } => "SingularMixCovariance",
            Error::NegativeWeight { .. } => "NegativeWeight",
            Error::ColumnSumViolation { .. } => "ColumnSumViolation",
            Error::SampleRateMismatch { .. } => "SampleRateMismatch",
            Error::ModelCountMismatch { .. } => "ModelCountMismatch",
            Error::WeightModelMismatch { .. } => "WeightModelMismatch",
            Error::SilentReference(_) => "SilentReference",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::RankDeficient => "RankDeficient",
            Error::EmptyInput => "EmptyInput",
            Error::LengthIncompatible(_) => "LengthIncompatible",
            Error::MissingStem { .. } => "MissingStem",
            Error::MalformedMagnitudes(_) => "MalformedMagnitudes",
            Error::Json { .. } => "JsonError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
