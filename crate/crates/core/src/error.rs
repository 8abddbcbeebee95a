use std::path::PathBuf;

use crate::model::Issue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty labeling")]
    EmptyLabeling,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("invalid cluster count k={k} for {n} points")]
    InvalidK { k: usize, n: usize },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("{n} items exceed the co-association limit of {limit}; use HBGF or MCLA instead")]
    CoassociationLimit { n: usize, limit: usize },

    #[error("degenerate ensemble: spectral rank {rank} is below k={k}")]
    DegenerateEnsemble { rank: usize, k: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("expected {expected} groups, got {got}, and the grouping is not flagged approximate")]
    GroupCountMismatch { expected: usize, got: usize },

    #[error("all consensus methods failed: {}", format_causes(.0))]
    ConsensusFailed(Vec<(String, String)>),

    #[error("corpus validation failed:\n{}", format_issues(.0))]
    Validation(Vec<Issue>),

    #[error("unknown prompt id `{0}`")]
    UnknownPrompt(String),

    #[error("no dense embeddings available for `{0}`")]
    MissingEmbeddings(String),

    #[error("item `{item}` has no truth label for category `{category}`")]
    MissingTruth { item: String, category: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {source}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_causes(causes: &[(String, String)]) -> String {
    causes
        .iter()
        .map(|(method, cause)| format!("{method}: {cause}"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn format_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(|issue| format!("  - {issue}"))
        .collect::<Vec<_>>()
        .join("\n")
}
