use thiserror::Error;

/// Errors raised across the extraction, calibration and evaluation stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a schema or value constraint. `field` is a path such as `rows[3].confidence`.
    #[error("invalid input at `{field}`: {reason}")]
    Schema { field: String, reason: String },

    /// Input is well-formed but cannot support the requested computation.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Prefixes the field path (for schema errors) or message with `prefix`.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::Schema { field, reason } => Error::Schema {
                field: format!("{prefix}.{field}"),
                reason,
            },
            Error::Degenerate(msg) => Error::Degenerate(format!("{prefix}: {msg}")),
            other => other,
        }
    }

    /// Process exit code: 2 for schema errors, 3 for degenerate data, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } => 2,
            Error::Json { .. } => 2,
            Error::Degenerate(_) => 3,
            Error::Io { .. } => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
