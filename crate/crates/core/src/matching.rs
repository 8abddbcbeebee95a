//! Maximum-weight one-to-one matching for small bipartite problems.
//!
//! Solved exactly by dynamic programming over subsets of columns, so the
//! column count is capped at [`MAX_COLUMNS`]. A matching first maximizes the
//! number of matched pairs, then the total weight. Among optimal matchings
//! the one chosen is lexicographically smallest when rows are visited in the
//! caller's order and each row prefers lower column indices.

use crate::error::{Error, Result};

pub const MAX_COLUMNS: usize = 16;
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Value {
    matched: usize,
    weight: f64,
}

impl Value {
    const ZERO: Value = Value {
        matched: 0,
        weight: 0.0,
    };

    fn plus(self, weight: f64) -> Value {
        Value {
            matched: self.matched + 1,
            weight: self.weight + weight,
        }
    }

    /// `self` is at least as good as `other`, up to rounding.
    fn reaches(self, other: Value) -> bool {
        self.matched > other.matched
            || (self.matched == other.matched
                && self.weight >= other.weight - TIE_EPS * (1.0 + other.weight.abs()))
    }

    fn better(self, other: Value) -> bool {
        self.matched > other.matched
            || (self.matched == other.matched
                && self.weight > other.weight + TIE_EPS * (1.0 + other.weight.abs()))
    }
}

/// `weights[row][col]`; returns the matched column per row.
pub fn max_weight_matching(weights: &[Vec<f64>], row_order: &[usize]) -> Result<Vec<Option<usize>>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if cols > MAX_COLUMNS {
        return Err(Error::Config(format!(
            "matching supports at most {MAX_COLUMNS} columns, got {cols}"
        )));
    }
    if weights.iter().any(|w| w.len() != cols) {
        return Err(Error::LengthMismatch {
            left: cols,
            right: weights.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(0),
        });
    }
    let mut order: Vec<usize> = row_order.to_vec();
    for r in 0..rows {
        if !order.contains(&r) {
            order.push(r);
        }
    }

    let masks = 1usize << cols;
    // best[i][mask]: optimum for rows order[i..] when columns in mask are taken.
    let mut best = vec![vec![Value::ZERO; masks]; order.len() + 1];
    for i in (0..order.len()).rev() {
        let row = &weights[order[i]];
        for mask in 0..masks {
            let mut value = best[i + 1][mask];
            for (c, &w) in row.iter().enumerate() {
                if mask & (1 << c) == 0 {
                    let candidate = best[i + 1][mask | (1 << c)].plus(w);
                    if candidate.better(value) {
                        value = candidate;
                    }
                }
            }
            best[i][mask] = value;
        }
    }

    let mut assignment = vec![None; rows];
    let mut mask = 0usize;
    for (i, &r) in order.iter().enumerate() {
        let target = best[i][mask];
        let choice = (0..cols)
            .filter(|c| mask & (1 << c) == 0)
            .find(|&c| best[i + 1][mask | (1 << c)].plus(weights[r][c]).reaches(target));
        if let Some(c) = choice {
            assignment[r] = Some(c);
            mask |= 1 << c;
        }
    }
    Ok(assignment)
}
