use thiserror::Error;

/// Errors raised while loading data or computing fairness metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input row. `row` is 1-based and counts the header as row 1.
    #[error("data_model: parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("data_model: schema error at row {row}: value {value:?} is not in the declared domain of column {column:?}")]
    Schema {
        row: usize,
        column: String,
        value: String,
    },

    #[error("{module}: config error: {message}")]
    Config {
        module: &'static str,
        message: String,
    },

    #[error("{module}: usage error: {message}")]
    Usage {
        module: &'static str,
        message: String,
    },

    /// A record lacks a field the metric needs. `record` is a 0-based index.
    #[error("{module}: record {record} is missing required field {field:?}")]
    MissingField {
        module: &'static str,
        record: usize,
        field: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(module: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn usage(module: &'static str, message: impl Into<String>) -> Self {
        Error::Usage {
            module,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
