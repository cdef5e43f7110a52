use std::path::PathBuf;

/// Errors produced anywhere in the vocoder pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid stft configuration: {0}")]
    InvalidStft(String),

    #[error("empty waveform")]
    EmptyWaveform,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("input of {len} samples is shorter than the minimum of {min} samples")]
    TooShort { len: usize, min: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("numeric abort: non-finite loss term `{0}`")]
    NumericAbort(String),

    #[error("wav {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("wav {path}: unsupported codec ({reason})")]
    UnsupportedCodec { path: PathBuf, reason: String },

    #[error("sample rate {found} Hz does not match configured {expected} Hz (no resampling)")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("config: {0}")]
    Config(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("array container: {0}")]
    ArrayFormat(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("checkpoint checksum mismatch")]
    CheckpointChecksum,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
