use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("extraction failed for {stmt_id}: {message}")]
    Extraction { stmt_id: String, message: String },

    #[error("transport error ({context}): {message}")]
    Transport { context: String, message: String },

    #[error("malformed service response ({context}): {message}")]
    MalformedResponse { context: String, message: String },

    #[error("eta is singular: 1 - |L|(1 - eta1) = 0 for |L| = {label_count}, eta1 = {eta1}")]
    Singularity { label_count: u32, eta1: f64 },

    #[error("inconsistent rates: |L| = {label_count}, eta1 = {eta1}, eta2 = {eta2} give eta = {eta} outside [0, 1]")]
    InconsistentRates {
        label_count: u32,
        eta1: f64,
        eta2: f64,
        eta: f64,
    },

    #[error("PABI radicand {radicand} is negative for |L| = {label_count}, eta = {eta}")]
    Domain {
        label_count: u32,
        eta: f64,
        radicand: f64,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    /// Attach a statement id to transport failures so callers can tell which
    /// record was in flight.
    pub fn with_stmt(self, stmt_id: &str) -> Self {
        match self {
            Error::Transport { context, message } => Error::Transport {
                context: format!("{stmt_id}: {context}"),
                message,
            },
            Error::MalformedResponse { context, message } => Error::MalformedResponse {
                context: format!("{stmt_id}: {context}"),
                message,
            },
            other => other,
        }
    }
}
