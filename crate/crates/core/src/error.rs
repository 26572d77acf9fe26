use std::path::PathBuf;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A mesh or cloud file could not be parsed. `location` is a line number
    /// for text formats and a byte offset for binary ones.
    #[error("malformed file {path} ({location}): {message}")]
    Malformed {
        path: PathBuf,
        location: String,
        message: String,
    },

    /// Input data violates a documented invariant (non-manifold edge,
    /// zero-extent mesh, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// A caller broke a precondition of an operation.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("singular kernel evaluation: |x - y| = {distance:e}")]
    Singular { distance: f64 },

    #[error("query on an empty point set")]
    EmptyResult,

    /// A non-finite value showed up in a network activation.
    #[error("non-finite value in layer `{layer}`")]
    Numeric { layer: &'static str },

    /// Binary dataset / checkpoint decoding failure.
    #[error("format error: {0}")]
    Format(String),

    #[error("indicator evaluation failed at lattice point ({i}, {j}, {k})")]
    Grid {
        i: usize,
        j: usize,
        k: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(
        path: impl Into<PathBuf>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Malformed {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }
}
