use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    Validation(String),

    #[error("degenerate axis-aligned needle: tip ({tip_x}, {tip_y}) and midpoint ({mid_x}, {mid_y}) share an axis")]
    DegenerateNeedle {
        tip_x: f64,
        tip_y: f64,
        mid_x: f64,
        mid_y: f64,
    },

    #[error("zero-length needle at ({x}, {y})")]
    ZeroLengthNeedle { x: f64, y: f64 },

    #[error("point ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("line {line}: field `{field}`: {reason}")]
    Parse {
        line: usize,
        field: &'static str,
        reason: String,
    },

    #[error("image format: {0}")]
    Format(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("needle placement: {0}")]
    Placement(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
