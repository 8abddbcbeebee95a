//! Hyperedge-based methods: MCLA and HBGF.

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::Matrix;
use crate::model::{Ensemble, Labeling};

use super::{argmax, repair_assignment, top_eigenvectors};

/// Relative eigenvalue floor below which HBGF treats `Â` as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// The binary item × hyperedge matrix `H`, stored sparsely: each item lies
/// in exactly one hyperedge per member.
#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphIncidence {
    n: usize,
    /// `edges_of[x]` lists the hyperedges containing item `x`, one per member.
    edges_of: Vec<Vec<usize>>,
    sizes: Vec<usize>,
}

impl HypergraphIncidence {
    pub fn new(group: &Ensemble) -> Result<Self> {
        if group.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let n = group.n();
        let mut edges_of = vec![Vec::with_capacity(group.len()); n];
        let mut sizes = Vec::new();
        for labeling in group.labelings() {
            let offset = sizes.len();
            sizes.extend(labeling.sizes());
            for (x, &l) in labeling.labels().iter().enumerate() {
                edges_of[x].push(offset + l);
            }
        }
        Ok(Self { n, edges_of, sizes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of hyperedges `C`.
    pub fn edges(&self) -> usize {
        self.sizes.len()
    }

    pub fn members(&self) -> usize {
        self.edges_of.first().map_or(0, Vec::len)
    }

    pub fn edge_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn edges_of(&self, x: usize) -> &[usize] {
        &self.edges_of[x]
    }

    pub fn contains(&self, x: usize, edge: usize) -> bool {
        self.edges_of[x].contains(&edge)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut h = Matrix::zeros(self.n, self.edges());
        for (x, edges) in self.edges_of.iter().enumerate() {
            for &e in edges {
                h[(x, e)] = 1.0;
            }
        }
        h
    }

    /// `HᵀH`: pairwise hyperedge intersection sizes.
    pub fn overlaps(&self) -> Matrix {
        let c = self.edges();
        let mut o = Matrix::zeros(c, c);
        for edges in &self.edges_of {
            for &a in edges {
                for &b in edges {
                    o[(a, b)] += 1.0;
                }
            }
        }
        o
    }

    pub fn jaccard(&self) -> Matrix {
        let mut j = self.overlaps();
        let c = self.edges();
        for a in 0..c {
            for b in 0..c {
                let inter = j[(a, b)];
                let union = (self.sizes[a] + self.sizes[b]) as f64 - inter;
                j[(a, b)] = inter / union;
            }
        }
        j
    }
}

pub fn mcla(group: &Ensemble, k: usize, seed: u64) -> Result<Labeling> {
    let h = HypergraphIncidence::new(group)?;
    if k > h.n() {
        return Err(Error::InvalidK { k, n: h.n() });
    }
    if h.edges() < k {
        return Err(Error::DegenerateEnsemble { rank: h.edges(), k });
    }
    let meta = kmeans(&h.jaccard(), k, seed)?.labeling;
    let mut meta_sizes = vec![0usize; k];
    for &m in meta.labels() {
        meta_sizes[m] += 1;
    }
    // participation[x][m]: share of meta-cluster m's hyperedges containing x.
    let participation: Vec<Vec<f64>> = (0..h.n())
        .map(|x| {
            let mut p = vec![0.0; k];
            for &e in h.edges_of(x) {
                p[meta.labels()[e]] += 1.0;
            }
            p.iter_mut()
                .zip(&meta_sizes)
                .for_each(|(v, &s)| *v /= s as f64);
            p
        })
        .collect();
    let labels = participation.iter().map(|p| argmax(p)).collect();
    repair_assignment(labels, k, |x, m| participation[x][m])
}

pub fn hbgf(group: &Ensemble, k: usize, seed: u64) -> Result<Labeling> {
    let h = HypergraphIncidence::new(group)?;
    if k > h.n() {
        return Err(Error::InvalidK { k, n: h.n() });
    }
    let c = h.edges();
    if c < k {
        return Err(Error::DegenerateEnsemble { rank: c, k });
    }
    // Â[x][e] = 1 / sqrt(r |e|) for x ∈ e, since every item has degree r.
    let r = h.members() as f64;
    let scale: Vec<f64> = h.edge_sizes().iter().map(|&s| 1.0 / (r * s as f64).sqrt()).collect();

    let overlaps = h.overlaps();
    let mut gram = Matrix::zeros(c, c);
    for a in 0..c {
        for b in 0..c {
            gram[(a, b)] = overlaps[(a, b)] * scale[a] * scale[b];
        }
    }
    let pairs = top_eigenvectors(&gram, k)?;
    let lead = pairs.values[0];
    let rank = pairs.values.iter().filter(|&&l| l > RANK_TOL * lead).count();
    if lead <= 0.0 || rank < k {
        return Err(Error::DegenerateEnsemble { rank, k });
    }
    let sigma: Vec<f64> = pairs.values.iter().map(|l| l.sqrt()).collect();

    let mut u = Matrix::zeros(h.n(), k);
    for x in 0..h.n() {
        let row = u.row_mut(x);
        for &e in h.edges_of(x) {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot += scale[e] * pairs.vectors[(e, j)];
            }
        }
        row.iter_mut().zip(&sigma).for_each(|(v, s)| *v /= s);
    }
    u.normalize_rows();
    Ok(kmeans(&u, k, seed)?.labeling)
}
