//! Network-facing stages of the pipeline: VQA text generation, prompt
//! paraphrasing and text embeddings.
//!
//! Every stage talks to a [`ChatBackend`] or [`EmbedBackend`]. [`HttpBackend`]
//! speaks a chat-completion style JSON protocol; [`mock`] provides scripted
//! in-process backends for offline runs and tests.

pub mod backend;
pub mod config;
pub mod embed;
pub mod error;
pub mod mock;
mod pool;
pub mod paraphrase;
pub mod vqa;

pub use backend::{ChatBackend, EmbedBackend, HttpBackend, VqaRequest, VqaResponse};
pub use config::{ClientConfig, RetryPolicy};
pub use embed::{cache_key, cache_path, embed_texts, EmbeddingService};
pub use error::{ClientError, Result};
pub use paraphrase::{paraphrase, parse_paraphrases, paraphrase_request};
pub use vqa::{pending_cells, vqa_generate, CellFailure, VqaSummary};
