//! Text-guided alternative consensus clustering.
//!
//! A set of prompts, each asking an image-to-text model about one aspect of a
//! dataset (the *category*, e.g. "suit" or "rank"), yields one generated text
//! per item and prompt. Each prompt's texts are featurized and clustered with
//! k-means, the resulting clusterings are grouped by their pairwise adjusted
//! mutual information using single linkage, and every group is collapsed into
//! one consensus clustering. Each consensus output is one alternative
//! clustering of the dataset.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: corpus, prompt specification, labelings and ensembles
//! - [`metrics`]: contingency tables, ARI, AMI and ensemble-average AMI
//! - [`featurize`]: tokenizer, TF-IDF and the dense embedding file format
//! - [`kmeans`]: k-means++ seeding with Lloyd iteration
//! - [`grouping`]: AMI distances, single linkage and threshold search
//! - [`consensus`]: CSPA, MCLA, HBGF and symmetric-NMF consensus
//! - [`explain`]: word-frequency explanations of final clusterings
//! - [`pipeline`]: end-to-end runs, baselines and evaluation reports
//! - [`synthetic`]: a generated playing-card corpus with known truths

pub mod consensus;
pub mod error;
pub mod explain;
pub mod featurize;
pub mod grouping;
pub mod kmeans;
pub mod linalg;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{Corpus, Ensemble, EnsembleMember, ItemRecord, Labeling, PromptSpec, Representation};
