use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received operands of incompatible shape.
    #[error("shape mismatch at operation {op}: {detail}")]
    Shape { op: usize, detail: String },

    /// A configuration or architecture value is outside its allowed range.
    #[error("invalid value for `{field}`: {detail}")]
    InvalidConfig { field: String, detail: String },

    /// Malformed or inconsistent input data.
    #[error("{}: {detail}", location(.file, .line))]
    Data {
        file: Option<PathBuf>,
        line: Option<u64>,
        detail: String,
    },

    /// A non-finite value appeared during training or evaluation.
    #[error("non-finite value in layer `{layer}`: {detail}")]
    Numeric { layer: String, detail: String },

    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn location(file: &Option<PathBuf>, line: &Option<u64>) -> String {
    match (file, line) {
        (Some(f), Some(l)) => format!("{}:{}", f.display(), l),
        (Some(f), None) => f.display().to_string(),
        (None, Some(l)) => format!("line {l}"),
        (None, None) => "data error".to_string(),
    }
}

impl Error {
    pub(crate) fn shape(op: usize, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn data(detail: impl Into<String>) -> Self {
        Error::Data {
            file: None,
            line: None,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Attach a context prefix (for example the outer iteration) to the message.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Shape { op, detail } => Error::Shape {
                op,
                detail: format!("{ctx}: {detail}"),
            },
            Error::InvalidConfig { field, detail } => Error::InvalidConfig {
                field,
                detail: format!("{ctx}: {detail}"),
            },
            Error::Data { file, line, detail } => Error::Data {
                file,
                line,
                detail: format!("{ctx}: {detail}"),
            },
            Error::Numeric { layer, detail } => Error::Numeric {
                layer,
                detail: format!("{ctx}: {detail}"),
            },
            Error::Invariant(msg) => Error::Invariant(format!("{ctx}: {msg}")),
            Error::Io { context, source } => Error::Io {
                context: format!("{ctx}: {context}"),
                source,
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
