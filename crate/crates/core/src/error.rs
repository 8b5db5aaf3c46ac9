use thiserror::Error;

/// Library-wide error type. Variants map onto the CLI exit-code taxonomy:
/// parse/io problems are exit 2, violated preconditions exit 3, and internal
/// invariant breaches exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invariant breach: {0}")]
    Invariant(String),
    #[error("parse error in {file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
