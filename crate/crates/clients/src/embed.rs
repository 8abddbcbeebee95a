//! Text embeddings with a content-addressed `AEMB1` cache.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tgaicc::featurize::{DenseSource, EmbeddingFile, FeatureMatrix};

use crate::backend::EmbedBackend;
use crate::config::ClientConfig;
use crate::error::{ClientError, Result};
use crate::pool::run_bounded;

/// Hex SHA-256 over the model name and the length-prefixed texts.
pub fn cache_key(model: &str, texts: &[String]) -> String {
    let mut hasher = Sha256::new();
    for part in std::iter::once(model).chain(texts.iter().map(String::as_str)) {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn cache_path(dir: &Path, model: &str, texts: &[String]) -> PathBuf {
    dir.join(format!("{}.aemb", cache_key(model, texts)))
}

/// Embeds `texts` in batches of `batch_size` and returns the row-normalized
/// matrix. With a cache directory, a previous result for the same model and
/// texts is read back without any request, and fresh results are stored.
pub fn embed_texts(
    texts: &[String],
    backend: &dyn EmbedBackend,
    config: &ClientConfig,
    cache_dir: Option<&Path>,
) -> Result<FeatureMatrix> {
    config.validate()?;
    if texts.is_empty() {
        return Err(ClientError::EmptyInput);
    }
    let cached = cache_dir.map(|dir| cache_path(dir, &config.model, texts));
    if let Some(path) = cached.as_deref().filter(|p| p.exists()) {
        return Ok(EmbeddingFile::read(path)?.to_features()?);
    }

    let batches: Vec<&[String]> = texts.chunks(config.batch_size).collect();
    let replies = run_bounded(&batches, config.max_concurrency, |batch| {
        config.retry.run(|| backend.embed(&config.model, batch))
    });
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(texts.len());
    for (batch, reply) in batches.iter().zip(replies) {
        let vectors = reply?;
        if vectors.len() != batch.len() {
            return Err(ClientError::Protocol(format!(
                "{} embeddings for {} inputs",
                vectors.len(),
                batch.len()
            )));
        }
        rows.extend(vectors);
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(ClientError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let file = EmbeddingFile::from_rows(&rows)?;
    let features = file.to_features()?;
    if let Some(path) = cached {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        file.write(&path)?;
    }
    Ok(features)
}

/// Dense features for the pipeline, served from the cache and embedded on a
/// miss. Without a backend every miss fails fast.
pub struct EmbeddingService<'a> {
    backend: Option<&'a dyn EmbedBackend>,
    config: ClientConfig,
    cache_dir: PathBuf,
}

impl<'a> EmbeddingService<'a> {
    pub fn new(backend: Option<&'a dyn EmbedBackend>, config: ClientConfig, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            backend,
            config,
            cache_dir: cache_dir.into(),
        }
    }

    pub fn embed(&self, texts: &[String]) -> Result<FeatureMatrix> {
        let path = cache_path(&self.cache_dir, &self.config.model, texts);
        match self.backend {
            Some(backend) => embed_texts(texts, backend, &self.config, Some(&self.cache_dir)),
            None if path.exists() && !texts.is_empty() => Ok(EmbeddingFile::read(&path)?.to_features()?),
            None if texts.is_empty() => Err(ClientError::EmptyInput),
            None => Err(ClientError::Offline { stage: "embed".into() }),
        }
    }
}

impl DenseSource for EmbeddingService<'_> {
    fn dense_features(&self, key: &str, texts: &[String]) -> tgaicc::error::Result<FeatureMatrix> {
        self.embed(texts).map_err(|e| match e {
            ClientError::Core(inner) => inner,
            other => tgaicc::error::Error::Config(format!("embedding `{key}`: {other}")),
        })
    }
}
