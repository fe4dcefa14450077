use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("source pretraining failed: best test accuracy {best_accuracy:.4} after {epochs} epochs")]
    PretrainFailure { best_accuracy: f64, epochs: usize },

    #[error("positive-class mining found no evidence of shared classes")]
    MiningFailure,

    #[error("non-finite value in {component}")]
    NonFinite { component: String },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
