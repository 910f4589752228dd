use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code taxonomy: usage problems exit 1,
/// unreadable or malformed inputs exit 2, numerical failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or image axis does not have the extent an operation requires.
    #[error("dimension mismatch on axis `{axis}`: expected {expected}, got {got}{}",
            if context.is_empty() { String::new() } else { format!(" ({context})") })]
    Dim {
        axis: &'static str,
        expected: usize,
        got: usize,
        context: String,
    },

    /// An invalid parameter value (radius, patch size, fraction out of range, ...).
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A network or training configuration that cannot be built.
    #[error("configuration error: {0}")]
    Config(String),

    /// PPM/PGM header is not something we can parse.
    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    /// Pixel payload ends before the header-declared size.
    #[error("truncated image payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },

    /// Sample depth other than 8-bit.
    #[error("unsupported sample depth: maxval {0} (only 255 supported)")]
    UnsupportedDepth(u32),

    /// Dataset manifest does not parse.
    #[error("malformed manifest: {0}")]
    Manifest(String),

    /// Checkpoint bytes are not a valid checkpoint.
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    /// Checkpoint holds a different configuration than the target graph.
    #[error("checkpoint config mismatch: {0}")]
    CheckpointMismatch(String),

    /// NaN/Inf encountered where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The finite-difference suite found a gradient discrepancy.
    #[error("gradient check failed: {0}")]
    GradcheckFailed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code class: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::GradcheckFailed(_) => 3,
            _ => 2,
        }
    }

    /// Short machine-greppable code for the error stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dim { .. } => "dim",
            Error::Param(_) => "param",
            Error::Config(_) => "config",
            Error::MalformedHeader(_) => "ppm-header",
            Error::TruncatedPayload { .. } => "ppm-truncated",
            Error::UnsupportedDepth(_) => "ppm-depth",
            Error::Manifest(_) => "manifest",
            Error::CheckpointFormat(_) => "ckpt-format",
            Error::CheckpointMismatch(_) => "ckpt-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::GradcheckFailed(_) => "gradcheck",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
