//! Symmetric non-negative factorization `S ≈ GGᵀ` of the co-association matrix.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kmeans::{plus_plus_indices, rng_for};
use crate::linalg::Matrix;
use crate::model::{Ensemble, Labeling};

use super::{argmax, coassociation, repair_assignment};

const EPS: f64 = 1e-9;
/// Weight of the multiplicative ratio in each update step.
const DAMPING: f64 = 0.5;
const MAX_ITER: usize = 300;
const REL_TOL: f64 = 1e-6;
const JITTER: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct NmfFactorization {
    /// `n × k`, non-negative.
    pub g: Matrix,
    /// `‖S − GGᵀ‖²_F` for the initial factor and after every update.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Damped multiplicative updates `G ← G ∘ (1 − β + β (SG) / (GGᵀG + ε))`
/// with `β = 1/2`. The undamped step (`β = 1`) can oscillate; the damped one
/// never increases the objective.
pub fn nmf_factorize(s: &Matrix, k: usize, seed: u64) -> Result<NmfFactorization> {
    let n = s.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut g = initial_factor(s, k, seed)?;
    let s_norm2 = s.as_slice().iter().map(|v| v * v).sum::<f64>();

    let mut sg = s.matmul(&g);
    let mut trace = vec![objective(s_norm2, &g, &sg)];
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let gtg = g.t_matmul(&g);
        let denom = g.matmul(&gtg);
        for ((x, &num), &den) in g.data_mut().iter_mut().zip(sg.as_slice()).zip(denom.as_slice()) {
            *x *= 1.0 - DAMPING + DAMPING * num / (den + EPS);
        }
        iterations += 1;
        sg = s.matmul(&g);
        let current = objective(s_norm2, &g, &sg);
        let previous = *trace.last().expect("trace starts non-empty");
        trace.push(current);
        if (previous - current).abs() <= REL_TOL * previous.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(NmfFactorization {
        g,
        objective_trace: trace,
        iterations,
    })
}

/// Column `j` starts as the similarity profile `S[:, c_j]` of an item picked
/// by k-means++ on the rows of `S`, plus uniform jitter in `(0, JITTER)` that
/// keeps every entry positive.
fn initial_factor(s: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    let n = s.rows();
    let mut rng = rng_for(seed);
    let picks = plus_plus_indices(s, k, &mut rng);
    let mut g = Matrix::zeros(n, k);
    for x in 0..n {
        for (j, &c) in picks.iter().enumerate() {
            g[(x, j)] = s[(x, c)] + JITTER * rng.random_range(f64::EPSILON..1.0);
        }
    }
    Ok(g)
}

/// `‖S‖² − 2 tr(GᵀSG) + ‖GᵀG‖²`, avoiding the `n × n` product `GGᵀ`.
fn objective(s_norm2: f64, g: &Matrix, sg: &Matrix) -> f64 {
    let cross: f64 = g.as_slice().iter().zip(sg.as_slice()).map(|(a, b)| a * b).sum();
    let gtg = g.t_matmul(g);
    let gram: f64 = gtg.as_slice().iter().map(|v| v * v).sum();
    (s_norm2 - 2.0 * cross + gram).max(0.0)
}

pub fn nmf_consensus(group: &Ensemble, k: usize, seed: u64) -> Result<Labeling> {
    let s = coassociation(group)?;
    let fit = nmf_factorize(s.matrix(), k, seed)?;
    let g = &fit.g;
    let labels = g.row_iter().map(argmax).collect();
    repair_assignment(labels, k, |x, j| g[(x, j)])
}
