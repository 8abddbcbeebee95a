//! Consensus aggregation of a group of clusterings.
//!
//! Four methods are run on every group and the result with the highest
//! average AMI against the group's members wins (clustering loss
//! `1 - ANMI`). Ties go to the earlier method in [`Method::ALL`].
//!
//! - CSPA: k-means on the rows of the co-association matrix.
//! - MCLA: k-means on the Jaccard similarity of hyperedges (one per member
//!   cluster) forms meta-clusters; items join the meta-cluster they
//!   participate in most.
//! - HBGF: spectral partition of the item/hyperedge bipartite graph.
//! - NMF: symmetric non-negative factorization of the co-association matrix.

mod eigen;
mod hypergraph;
mod nmf;
mod targets;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::Matrix;
use crate::metrics::anmi;
use crate::model::{Ensemble, Labeling};

pub use eigen::{top_eigenvectors, Eigenpairs};
pub use hypergraph::{hbgf, mcla, HypergraphIncidence};
pub use nmf::{nmf_consensus, nmf_factorize, NmfFactorization};
pub use targets::{assign_targets, TargetAssignment};

/// CSPA and NMF hold an `n × n` matrix; larger inputs are refused.
pub const COASSOCIATION_LIMIT: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Cspa,
    Mcla,
    Hbgf,
    Nmf,
}

impl Method {
    /// Also the tie-break order of the selection.
    pub const ALL: [Method; 4] = [Method::Cspa, Method::Mcla, Method::Hbgf, Method::Nmf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cspa => "CSPA",
            Method::Mcla => "MCLA",
            Method::Hbgf => "HBGF",
            Method::Nmf => "NMF",
        }
    }

    pub fn run(self, group: &Ensemble, k: usize, seed: u64) -> Result<Labeling> {
        match self {
            Method::Cspa => cspa(group, k, seed),
            Method::Mcla => mcla(group, k, seed),
            Method::Hbgf => hbgf(group, k, seed),
            Method::Nmf => nmf_consensus(group, k, seed),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown consensus method `{s}`")))
    }
}

/// Fraction of group members that put items `x` and `y` in the same cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CoassocMatrix(pub Matrix);

impl CoassocMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }
}

pub fn coassociation(group: &Ensemble) -> Result<CoassocMatrix> {
    if group.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = group.n();
    if n > COASSOCIATION_LIMIT {
        return Err(Error::CoassociationLimit {
            n,
            limit: COASSOCIATION_LIMIT,
        });
    }
    let weight = 1.0 / group.len() as f64;
    let mut s = Matrix::zeros(n, n);
    for labeling in group.labelings() {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); labeling.k()];
        for (x, &l) in labeling.labels().iter().enumerate() {
            members[l].push(x);
        }
        for cluster in &members {
            for &x in cluster {
                let row = s.row_mut(x);
                for &y in cluster {
                    row[y] += weight;
                }
            }
        }
    }
    // Exact ones on the diagonal regardless of rounding in the sum.
    for x in 0..n {
        s[(x, x)] = 1.0;
    }
    Ok(CoassocMatrix(s))
}

pub fn cspa(group: &Ensemble, k: usize, seed: u64) -> Result<Labeling> {
    let s = coassociation(group)?;
    Ok(kmeans(s.matrix(), k, seed)?.labeling)
}

/// Gives every empty cluster the item that fits its own cluster worst
/// (lowest `fit`, lowest index on ties), taken from clusters of size ≥ 2,
/// then canonicalizes.
pub(crate) fn repair_assignment(
    mut labels: Vec<usize>,
    k: usize,
    fit: impl Fn(usize, usize) -> f64,
) -> Result<Labeling> {
    let n = labels.len();
    if k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for x in 0..n {
            if sizes[labels[x]] < 2 {
                continue;
            }
            if donor.is_none_or(|d| fit(x, labels[x]) < fit(d, labels[d])) {
                donor = Some(x);
            }
        }
        let x = donor.expect("k <= n guarantees a donor cluster");
        sizes[labels[x]] -= 1;
        sizes[empty] += 1;
        labels[x] = empty;
    }
    Labeling::new(&labels)
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCandidate {
    pub method: Method,
    pub labeling: Labeling,
    pub anmi: f64,
    pub seed: u64,
}

/// Outcome of one method on one group.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub method: Method,
    pub outcome: std::result::Result<ConsensusCandidate, String>,
}

/// Runs every method (concurrently) and scores each against the group.
pub fn run_all(group: &Ensemble, k: usize, seed: u64) -> Vec<Attempt> {
    Method::ALL
        .par_iter()
        .map(|&method| {
            let outcome = method
                .run(group, k, seed)
                .and_then(|labeling| {
                    let anmi = anmi(&labeling, group)?;
                    Ok(ConsensusCandidate {
                        method,
                        labeling,
                        anmi,
                        seed,
                    })
                })
                .map_err(|e| e.to_string());
            Attempt { method, outcome }
        })
        .collect()
}

/// The successful attempt with the highest ANMI; earlier methods win ties.
pub fn select(attempts: &[Attempt]) -> Result<ConsensusCandidate> {
    let mut best: Option<&ConsensusCandidate> = None;
    for attempt in attempts {
        if let Ok(candidate) = &attempt.outcome {
            if best.is_none_or(|b| candidate.anmi > b.anmi) {
                best = Some(candidate);
            }
        }
    }
    best.cloned().ok_or_else(|| {
        Error::ConsensusFailed(
            attempts
                .iter()
                .filter_map(|a| a.outcome.as_ref().err().map(|e| (a.method.to_string(), e.clone())))
                .collect(),
        )
    })
}

pub fn aggregate_group(group: &Ensemble, k: usize, seed: u64) -> Result<ConsensusCandidate> {
    if group.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    select(&run_all(group, k, seed))
}
