//! Leading eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Each sweep costs `O(size³)`; the inputs here have one row per cluster.
const MAX_SIZE: usize = 2048;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    /// Non-increasing.
    pub values: Vec<f64>,
    /// `size × k`; column `j` pairs with `values[j]`.
    pub vectors: Matrix,
}

impl Eigenpairs {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.row_iter().map(|row| row[j]).collect()
    }
}

/// The `k` algebraically largest eigenpairs of `m`.
///
/// The full spectrum is diagonalized, so close or repeated eigenvalues need
/// no special care. Each eigenvector's largest-magnitude entry is positive.
pub fn top_eigenvectors(m: &Matrix, k: usize) -> Result<Eigenpairs> {
    let size = m.rows();
    if m.cols() != size {
        return Err(Error::LengthMismatch {
            left: size,
            right: m.cols(),
        });
    }
    if size > MAX_SIZE {
        return Err(Error::Config(format!(
            "eigensolver supports at most {MAX_SIZE} rows, got {size}"
        )));
    }
    if k == 0 || k > size {
        return Err(Error::InvalidK { k, n: size });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let norm = m.frobenius_norm();
    if !m.is_symmetric(1e-12 * norm.max(1.0)) {
        return Err(Error::Config("eigensolver needs a symmetric matrix".into()));
    }

    let (a, v) = jacobi(m, norm)?;
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    order.truncate(k);

    let mut vectors = Matrix::zeros(size, k);
    for (j, &col) in order.iter().enumerate() {
        let pivot = (0..size)
            .map(|i| v[(i, col)])
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..size {
            vectors[(i, j)] = sign * v[(i, col)];
        }
    }
    Ok(Eigenpairs {
        values: order.iter().map(|&i| a[(i, i)]).collect(),
        vectors,
    })
}

/// Diagonalizes `m` in place of a copy; returns the diagonal form and the
/// accumulated rotations, whose columns are the eigenvectors.
fn jacobi(m: &Matrix, norm: f64) -> Result<(Matrix, Matrix)> {
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let target = (f64::EPSILON * norm).powi(2);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| 2.0 * a[(p, q)].powi(2))
            .sum();
        if off <= target {
            return Ok((a, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[(p, r)], a[(q, r)]);
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                for r in 0..n {
                    let (vrp, vrq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }
    Err(Error::NoConvergence { sweeps: MAX_SWEEPS })
}
