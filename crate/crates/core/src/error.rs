use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} has length {actual}, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token id {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: u32 },

    #[error("provider may not read past window {requested} (current window is {current})")]
    ProviderPastAccessDenied { requested: u64, current: u64 },

    #[error("window {requested} has not been reached (current window is {current})")]
    WindowNotYetReached { requested: u64, current: u64 },

    #[error("vault file is inconsistent: {0}")]
    VaultCorrupt(String),

    #[error("surrogate training diverged at epoch {epoch} (mean loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
