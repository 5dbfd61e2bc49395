use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate fell outside the screen on the named axis.
    #[error("{axis} coordinate {value} outside [0, {max}]")]
    Range {
        axis: &'static str,
        value: f64,
        max: f64,
    },

    #[error("unsupported action type `{0}`")]
    UnsupportedAction(String),

    /// Structural problem in an input record. `path` is a dotted field path.
    #[error("{}", schema_message(.path, .message))]
    Schema { path: String, message: String },

    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn schema_message(path: &str, message: &str) -> String {
    if path.is_empty() {
        message.to_string()
    } else {
        format!("{message} {path}")
    }
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn at_line(self, line: usize) -> Self {
        Error::Line {
            line,
            source: Box::new(self),
        }
    }

    /// Prefixes the schema path with `prefix` (e.g. `steps[2]`).
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::Schema { path, message } => {
                let path = if path.is_empty() {
                    prefix.to_string()
                } else if path.starts_with('[') {
                    format!("{prefix}{path}")
                } else {
                    format!("{prefix}.{path}")
                };
                Error::Schema { path, message }
            }
            other => other,
        }
    }

    /// True for errors caused by malformed input data (CLI exit code 2).
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Line { source, .. } => source.is_input_error(),
            Error::Range { .. }
            | Error::UnsupportedAction(_)
            | Error::Schema { .. }
            | Error::Domain(_)
            | Error::Io { .. } => true,
            Error::Config(_) => false,
        }
    }
}
