//! k-means with greedy k-means++ seeding and Lloyd iteration.
//!
//! Every call performs exactly one initialization. Randomness comes from
//! [`rng_for`], a ChaCha8 stream seeded through `seed_from_u64`; ChaCha8 is a
//! fixed, platform-independent algorithm, so a `(data, k, seed)` triple yields
//! bit-identical labels everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::model::Labeling;

/// The generator behind every seeded routine in this crate.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Convergence threshold on the squared Frobenius norm of the center shift.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labeling: Labeling,
    /// One row per cluster of the canonical labeling.
    pub centers: Matrix,
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Inertia after each Lloyd iteration.
    pub inertia_trace: Vec<f64>,
}

pub fn kmeans(data: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_with(data, k, seed, KMeansOptions::default())
}

pub fn kmeans_with(
    data: &Matrix,
    k: usize,
    seed: u64,
    options: KMeansOptions,
) -> Result<KMeansResult> {
    let n = data.rows();
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if !data.is_finite() {
        return Err(Error::NonFinite);
    }

    let mut rng = rng_for(seed);
    let mut centers = plus_plus_seeds(data, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut nearest = vec![0.0f64; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..options.max_iter.max(1) {
        iterations += 1;
        assign(data, &centers, &mut labels, &mut nearest);
        repair_empty_clusters(data, &mut centers, &mut labels, &mut nearest);
        let updated = means(data, &labels, k);
        let shift: f64 = (0..k)
            .map(|c| squared_distance(centers.row(c), updated.row(c)))
            .sum();
        centers = updated;
        trace.push(inertia(data, &centers, &labels));
        if shift < options.tol {
            break;
        }
    }

    let labeling = Labeling::new(&labels)?;
    // Reorder centers to the canonical cluster numbering.
    let mut canonical_centers = Matrix::zeros(k, data.cols());
    let mut placed = vec![false; k];
    for (&raw, &canon) in labels.iter().zip(labeling.labels()) {
        if !placed[canon] {
            canonical_centers.row_mut(canon).copy_from_slice(centers.row(raw));
            placed[canon] = true;
        }
    }
    let inertia = *trace.last().expect("at least one iteration");
    Ok(KMeansResult {
        labeling,
        centers: canonical_centers,
        inertia,
        iterations,
        seed,
        inertia_trace: trace,
    })
}

fn plus_plus_seeds(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut centers = Matrix::zeros(k, data.cols());
    for (c, pick) in plus_plus_indices(data, k, rng).into_iter().enumerate() {
        centers.row_mut(c).copy_from_slice(data.row(pick));
    }
    centers
}

/// Rows chosen by greedy k-means++: each step draws `2 + ⌊ln k⌋` candidates
/// by D² sampling and keeps the one that lowers the total squared distance
/// most (first candidate on ties). Draws are uniform when every remaining
/// distance is zero.
pub(crate) fn plus_plus_indices(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.rows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let first = rng.random_range(0..n);
    let mut picks = vec![first];
    let mut d2: Vec<f64> = data
        .row_iter()
        .map(|x| squared_distance(x, data.row(first)))
        .collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let candidate = if total > 0.0 {
                sample_by_weight(&d2, rng.random::<f64>() * total)
            } else {
                rng.random_range(0..n)
            };
            let updated: Vec<f64> = d2
                .iter()
                .enumerate()
                .map(|(x, &d)| d.min(squared_distance(data.row(x), data.row(candidate))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((candidate, potential, updated));
            }
        }
        let (pick, _, updated) = best.expect("at least two trials");
        picks.push(pick);
        d2 = updated;
    }
    picks
}

/// First index whose running weight sum exceeds `target`.
fn sample_by_weight(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (x, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 && acc > target {
            return x;
        }
    }
    // Rounding can leave `target` just past the accumulated sum.
    weights.iter().rposition(|&w| w > 0.0).expect("positive total")
}

/// Nearest center per point; ties go to the lowest center index.
fn assign(data: &Matrix, centers: &Matrix, labels: &mut [usize], nearest: &mut [f64]) {
    for (x, point) in data.row_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.row_iter().enumerate() {
            let d = squared_distance(point, center);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        labels[x] = best;
        nearest[x] = best_d;
    }
}

/// Every empty cluster takes the point farthest from its own center among
/// clusters that can spare one (lowest row index on ties) and is re-centered
/// on it.
fn repair_empty_clusters(
    data: &Matrix,
    centers: &mut Matrix,
    labels: &mut [usize],
    nearest: &mut [f64],
) {
    let k = centers.rows();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for x in 0..labels.len() {
            if sizes[labels[x]] < 2 {
                continue;
            }
            if donor.is_none_or(|d| nearest[x] > nearest[d]) {
                donor = Some(x);
            }
        }
        let x = donor.expect("k <= n guarantees a cluster with two points");
        sizes[labels[x]] -= 1;
        sizes[empty] += 1;
        labels[x] = empty;
        nearest[x] = 0.0;
        centers.row_mut(empty).copy_from_slice(data.row(x));
    }
}

fn means(data: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, data.cols());
    let mut counts = vec![0usize; k];
    for (point, &l) in data.row_iter().zip(labels) {
        counts[l] += 1;
        for (s, &v) in sums.row_mut(l).iter_mut().zip(point) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(c).iter_mut().for_each(|s| *s /= count as f64);
        }
    }
    sums
}

fn inertia(data: &Matrix, centers: &Matrix, labels: &[usize]) -> f64 {
    data.row_iter()
        .zip(labels)
        .map(|(point, &l)| squared_distance(point, centers.row(l)))
        .sum()
}
