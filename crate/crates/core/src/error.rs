use std::path::PathBuf;

/// Errors raised by the restoration library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("image is {height}x{width} but at least {min}x{min} is required")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("kernel of size {kh}x{kw} does not fit a {height}x{width} image")]
    KernelTooLarge {
        kh: usize,
        kw: usize,
        height: usize,
        width: usize,
    },

    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt header in {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("corrupt graph cache: {0}")]
    CorruptGraph(String),

    #[error(
        "convergence guard violated: delta = {delta} must satisfy 0 < delta < 1/||B^T B|| = {bound}"
    )]
    SpectralGuard { delta: f64, bound: f64 },

    #[error("iterate became non-finite at outer iteration {iteration}")]
    Diverged { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
