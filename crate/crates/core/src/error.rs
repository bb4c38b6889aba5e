use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("map has no target pixels")]
    EmptyTarget,

    #[error("pixel ({x}, {y}) at depth {depth} m lies outside the time window")]
    OutOfRange { x: usize, y: usize, depth: f64 },

    #[error("histogram has no counts")]
    EmptySignal,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {0} is not a trained class")]
    UnknownLabel(u32),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("class {class} has {count} samples, need at least {required}")]
    InsufficientSupport {
        class: u32,
        count: usize,
        required: usize,
    },

    #[error("degenerate feature: zero vector")]
    DegenerateFeature,

    #[error("knowledge base is empty")]
    EmptySkb,

    #[error("protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
