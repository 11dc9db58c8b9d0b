use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pixel shape used in mismatch diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bit_depth: u8,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} @{}bit",
            self.width, self.height, self.channels, self.bit_depth
        )
    }
}

/// Failures reported by an external SR engine run.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine `{model}` exited with status {status}: {diagnostics}")]
    NonZeroExit {
        model: String,
        status: String,
        diagnostics: String,
    },
    #[error("engine `{model}` timed out after {seconds}s")]
    Timeout { model: String, seconds: f64 },
    #[error("engine `{model}` produced no output for `{file}`")]
    MissingOutput { model: String, file: String },
    #[error("engine `{model}` produced unexpected output `{file}`")]
    ExtraOutput { model: String, file: String },
    #[error("model output shape mismatch for `{file}`: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    ShapeMismatch {
        file: String,
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("invalid command template: {0}")]
    Template(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: PNG decode failed: {message}", path.display())]
    Decode { path: PathBuf, message: String },
    #[error("{}: PNG encode failed: {message}", path.display())]
    Encode { path: PathBuf, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("{context}: shape mismatch ({left} vs {right})")]
    ShapeMismatch {
        context: String,
        left: Shape,
        right: Shape,
    },
    #[error("{width}x{height} is not divisible by {factor}")]
    NotDivisible {
        width: usize,
        height: usize,
        factor: usize,
    },
    #[error(
        "cannot reflect-pad {width}x{height} by ({pad_w}, {pad_h}): image too small to reflect"
    )]
    TooSmallToReflect {
        width: usize,
        height: usize,
        pad_w: usize,
        pad_h: usize,
    },
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    SmallerThanWindow {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("invalid ensemble weights: {0}")]
    InvalidWeights(String),
    #[error("weight grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: u128, cap: usize },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("missing SR output for image `{0}`")]
    MissingSubmission(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("image `{image_id}`: {source}")]
    ForImage {
        image_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn for_image(image_id: impl Into<String>, source: Error) -> Self {
        Error::ForImage {
            image_id: image_id.into(),
            source: Box::new(source),
        }
    }

    /// True for filesystem and engine failures, false for bad inputs.
    ///
    /// The CLI maps the former to exit code 2 and the latter to exit code 1.
    pub fn is_runtime_failure(&self) -> bool {
        match self {
            Error::Engine(EngineError::Template(_)) => false,
            Error::Io { .. } | Error::Decode { .. } | Error::Encode { .. } | Error::Engine(_) => {
                true
            }
            Error::ForImage { source, .. } => source.is_runtime_failure(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
