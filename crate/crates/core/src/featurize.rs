//! Text featurization: tokenizer, TF-IDF, and the `AEMB1` dense embedding
//! file format.
//!
//! TF-IDF uses raw term counts, smoothed idf `ln((1 + n) / (1 + df)) + 1`
//! and L2-normalized rows. Vocabulary columns are sorted lexicographically.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Representation;

pub const AEMB_MAGIC: &[u8; 5] = b"AEMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: Matrix,
    pub representation: Representation,
    /// Token to column, TF-IDF only.
    pub vocabulary: Option<BTreeMap<String, usize>>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dims(&self) -> usize {
        self.matrix.cols()
    }

    /// Wraps a dense matrix, normalizing every non-zero row.
    pub fn dense(mut matrix: Matrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::NonFinite);
        }
        matrix.normalize_rows();
        Ok(Self {
            matrix,
            representation: Representation::Dense,
            vocabulary: None,
        })
    }
}

/// Lowercased maximal runs of letters and digits. Single-character tokens are
/// dropped unless they are digits, so card values like "7" survive.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|run| !run.is_empty())
        .filter(|run| run.chars().count() >= 2 || run.chars().all(|c| c.is_numeric()))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfidfOptions {
    /// Terms occurring in fewer documents are dropped.
    pub min_df: usize,
}

impl Default for TfidfOptions {
    fn default() -> Self {
        Self { min_df: 1 }
    }
}

pub fn tfidf(texts: &[String]) -> Result<FeatureMatrix> {
    tfidf_with(texts, TfidfOptions::default())
}

pub fn tfidf_with(texts: &[String], options: TfidfOptions) -> Result<FeatureMatrix> {
    let documents: Vec<BTreeMap<String, usize>> = texts
        .iter()
        .map(|text| {
            let mut counts = BTreeMap::new();
            for token in tokenize(text) {
                *counts.entry(token).or_insert(0usize) += 1;
            }
            counts
        })
        .collect();

    let mut document_frequency: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &documents {
        for token in doc.keys() {
            *document_frequency.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    document_frequency.retain(|_, df| *df >= options.min_df.max(1));
    if document_frequency.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let n = texts.len() as f64;
    let vocabulary: BTreeMap<String, usize> = document_frequency
        .keys()
        .enumerate()
        .map(|(column, token)| (token.to_string(), column))
        .collect();
    let idf: Vec<f64> = document_frequency
        .values()
        .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
        .collect();

    let mut matrix = Matrix::zeros(texts.len(), vocabulary.len());
    for (row, doc) in documents.iter().enumerate() {
        for (token, &count) in doc {
            if let Some(&column) = vocabulary.get(token) {
                matrix[(row, column)] = count as f64 * idf[column];
            }
        }
    }
    matrix.normalize_rows();
    Ok(FeatureMatrix {
        matrix,
        representation: Representation::Tfidf,
        vocabulary: Some(vocabulary),
    })
}

/// Raw contents of an `AEMB1` file: `n × d` little-endian `f32`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub n: u32,
    pub d: u32,
    pub data: Vec<f32>,
}

impl EmbeddingFile {
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::EmbeddingFormat(format!(
                "row of dimension {} in a matrix of dimension {d}",
                bad.len()
            )));
        }
        Ok(Self {
            n: rows.len() as u32,
            d: d as u32,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_matrix(matrix: &Matrix) -> Self {
        Self {
            n: matrix.rows() as u32,
            d: matrix.cols() as u32,
            data: matrix.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * self.data.len());
        out.extend_from_slice(AEMB_MAGIC);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = bytes
            .get(..13)
            .ok_or_else(|| Error::EmbeddingFormat("truncated header".into()))?;
        if &header[..5] != AEMB_MAGIC {
            return Err(Error::EmbeddingFormat("bad magic".into()));
        }
        let n = u32::from_le_bytes(header[5..9].try_into().unwrap());
        let d = u32::from_le_bytes(header[9..13].try_into().unwrap());
        let expected = (n as usize)
            .checked_mul(d as usize)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::EmbeddingFormat("shape overflow".into()))?;
        let body = &bytes[13..];
        if body.len() != expected {
            return Err(Error::EmbeddingFormat(format!(
                "shape {n}x{d} needs {expected} data bytes, found {}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { n, d, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::model::write_atomic(path.as_ref(), &self.to_bytes())
    }

    /// Row-normalized dense feature matrix.
    pub fn to_features(&self) -> Result<FeatureMatrix> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let matrix = Matrix::from_vec(
            self.n as usize,
            self.d as usize,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )?;
        FeatureMatrix::dense(matrix)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    EmbeddingFile::read(path)?.to_features()
}

/// Supplier of dense features for a named text column (a prompt id, or a
/// concatenation of prompt ids in concat mode).
pub trait DenseSource: Sync {
    fn dense_features(&self, key: &str, texts: &[String]) -> Result<FeatureMatrix>;
}

/// Precomputed embeddings stored as `{dir}/{key}.aemb`.
#[derive(Debug, Clone)]
pub struct EmbeddingDir {
    pub dir: PathBuf,
}

impl EmbeddingDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{}.aemb", file_key(key)))
    }
}

/// Maps a key to a file-name-safe form.
pub fn file_key(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_alphanumeric() || "._+-".contains(c) { c } else { '_' })
        .collect()
}

impl DenseSource for EmbeddingDir {
    fn dense_features(&self, key: &str, texts: &[String]) -> Result<FeatureMatrix> {
        let path = self.path_for(key);
        if !path.exists() {
            return Err(Error::MissingEmbeddings(key.to_string()));
        }
        let features = load_embeddings(&path)?;
        if features.rows() != texts.len() {
            return Err(Error::EmbeddingFormat(format!(
                "{} has {} rows, expected {}",
                path.display(),
                features.rows(),
                texts.len()
            )));
        }
        Ok(features)
    }
}
