//! Partition-comparison metrics.
//!
//! ARI is evaluated with exact integer pair counts and a single final
//! division. AMI uses natural logarithms, arithmetic-mean normalization and the
//! exact expected mutual information under the permutation (hypergeometric)
//! model, accumulated through a log-factorial table so that `n = 10⁴` does not
//! overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ensemble, Labeling};

/// A metric value together with its ×100 presentation form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub value: f64,
    pub scaled_value: f64,
}

impl MetricScore {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            scaled_value: value * 100.0,
        }
    }
}

/// Cluster co-occurrence counts of two labelings of the same items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.cols + col]
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    /// Dense row-major view, mainly for inspection and tests.
    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.cols).map(<[u64]>::to_vec).collect()
    }

    fn nonzero(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.iter().copied().filter(|&c| c > 0)
    }
}

pub fn contingency(a: &Labeling, b: &Labeling) -> Result<ContingencyTable> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (rows, cols) = (a.k(), b.k());
    let mut counts = vec![0u64; rows * cols];
    for (&i, &j) in a.labels().iter().zip(b.labels()) {
        counts[i * cols + j] += 1;
    }
    let mut row_sums = vec![0u64; rows];
    let mut col_sums = vec![0u64; cols];
    for i in 0..rows {
        for j in 0..cols {
            let c = counts[i * cols + j];
            row_sums[i] += c;
            col_sums[j] += c;
        }
    }
    Ok(ContingencyTable {
        rows,
        cols,
        counts,
        row_sums,
        col_sums,
        n: a.len() as u64,
    })
}

fn check_pair(a: &Labeling, b: &Labeling) -> Result<ContingencyTable> {
    let table = contingency(a, b)?;
    if table.n < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            got: table.n as usize,
        });
    }
    Ok(table)
}

fn pairs(x: u64) -> i128 {
    let x = i128::from(x);
    x * (x - 1) / 2
}

/// Adjusted Rand index.
pub fn ari(a: &Labeling, b: &Labeling) -> Result<MetricScore> {
    let table = check_pair(a, b)?;
    Ok(MetricScore::new(ari_from_table(&table)))
}

pub fn ari_from_table(table: &ContingencyTable) -> f64 {
    let index: i128 = table.nonzero().map(pairs).sum();
    let sum_a: i128 = table.row_sums.iter().copied().map(pairs).sum();
    let sum_b: i128 = table.col_sums.iter().copied().map(pairs).sum();
    let total = pairs(table.n);
    // ARI = (index - sa*sb/total) / ((sa+sb)/2 - sa*sb/total), scaled by 2*total.
    let numerator = 2 * (index * total - sum_a * sum_b);
    let denominator = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
    if denominator == 0 {
        // Only reachable when both labelings are all-one-cluster or both are all-singletons.
        return 1.0;
    }
    numerator as f64 / denominator as f64
}

/// `x ln x`, with `0 ln 0 = 0`.
fn xlogx(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        let x = x as f64;
        x * x.ln()
    }
}

fn entropy_from_counts(counts: &[u64], n: u64) -> f64 {
    let n_f = n as f64;
    let sum: f64 = counts.iter().map(|&c| xlogx(c)).sum();
    n_f.ln() - sum / n_f
}

/// Shannon entropy (natural log) of a labeling.
pub fn entropy(labeling: &Labeling) -> f64 {
    let sizes: Vec<u64> = labeling.sizes().into_iter().map(|s| s as u64).collect();
    entropy_from_counts(&sizes, labeling.len() as u64)
}

/// Mutual information (natural log) from a contingency table.
pub fn mutual_info(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    let joint: f64 = table.nonzero().map(xlogx).sum();
    let rows: f64 = table.row_sums.iter().map(|&c| xlogx(c)).sum();
    let cols: f64 = table.col_sums.iter().map(|&c| xlogx(c)).sum();
    let mi = n.ln() + (joint - rows - cols) / n;
    mi.max(0.0)
}

/// `ln(i!)` for `i` in `0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    table.push(acc);
    for i in 1..=n {
        acc += (i as f64).ln();
        table.push(acc);
    }
    table
}

/// Expected mutual information of two random labelings with the table's
/// marginals, under the hypergeometric model.
pub fn expected_mutual_info(table: &ContingencyTable) -> f64 {
    let n = table.n as usize;
    let n_f = n as f64;
    let ln_n = n_f.ln();
    let lf = log_factorials(n);
    let mut emi = 0.0f64;
    for &a in &table.row_sums {
        let a = a as usize;
        for &b in &table.col_sums {
            let b = b as usize;
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let ln_ab = (a as f64).ln() + (b as f64).ln();
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for nij in lo..=hi {
                let log_prob =
                    fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                let nij_f = nij as f64;
                emi += nij_f / n_f * (ln_n + nij_f.ln() - ln_ab) * log_prob.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalization.
pub fn ami(a: &Labeling, b: &Labeling) -> Result<MetricScore> {
    let table = check_pair(a, b)?;
    Ok(MetricScore::new(ami_from_table(&table)))
}

pub fn ami_from_table(table: &ContingencyTable) -> f64 {
    let n = table.n as usize;
    if (table.rows == 1 && table.cols == 1) || (table.rows == n && table.cols == n) {
        return 1.0;
    }
    let mi = mutual_info(table);
    let h_a = entropy_from_counts(&table.row_sums, table.n);
    let h_b = entropy_from_counts(&table.col_sums, table.n);
    let emi = expected_mutual_info(table);
    let denominator = 0.5 * (h_a + h_b) - emi;
    if denominator.abs() <= f64::EPSILON {
        return 0.0;
    }
    (mi - emi) / denominator
}

/// Average AMI between a candidate and every ensemble member. The consensus
/// clustering loss is `1 - anmi`.
pub fn anmi(candidate: &Labeling, ensemble: &Ensemble) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut total = 0.0;
    for member in ensemble.labelings() {
        total += ami(candidate, member)?.value;
    }
    Ok(total / ensemble.len() as f64)
}
