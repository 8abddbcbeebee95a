use std::time::Duration;

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("stage `{stage}` needs a network endpoint, but none is configured")]
    Offline { stage: String },

    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("request timed out after {0:?}")]
    Timeout(Duration),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("unexpected response: {0}")]
    Protocol(String),

    #[error("expected 3 paraphrases, parsed {found}; raw response:\n{raw}")]
    Paraphrase { found: usize, raw: String },

    #[error("nothing to embed")]
    EmptyInput,

    #[error("embedding dimension changed from {expected} to {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("item `{0}` has no image reference")]
    MissingImage(String),

    #[error("invalid client configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] tgaicc::error::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ClientError {
    /// Whether a retry may succeed: timeouts, transport failures, 429 and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            Self::Timeout(_) | Self::Transport(_) => true,
            Self::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
