use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite {what} produced by {op}")]
    NonFinite { op: &'static str, what: &'static str },
    #[error("autodiff state error: {0}")]
    State(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
