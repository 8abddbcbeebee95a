//! Grouping of similar clusterings.
//!
//! Clusterings are compared with `d = 1 - AMI`, merged by single linkage
//! (minimum spanning tree), and cut at a threshold τ taken from the grid
//! `{0.02, 0.04, …, 0.98}`. Two clusterings are connected when `d ≤ τ`.
//! Anti-correlated pairs have `d > 1` and never merge on the grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ami;
use crate::model::Ensemble;

pub const GRID_STEPS: usize = 50;

/// The 49 thresholds `i / 50` for `i = 1..=49`.
pub fn threshold_grid() -> Vec<f64> {
    (1..GRID_STEPS).map(|i| i as f64 / GRID_STEPS as f64).collect()
}

/// Condensed symmetric distance matrix over `size` clusterings.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    condensed: Vec<f64>,
}

impl DistanceMatrix {
    /// `condensed` lists `d(i, j)` for `i < j` in row-major order.
    pub fn new(size: usize, condensed: Vec<f64>) -> Result<Self> {
        let expected = size * size.saturating_sub(1) / 2;
        if condensed.len() != expected {
            return Err(Error::LengthMismatch {
                left: expected,
                right: condensed.len(),
            });
        }
        if condensed.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { size, condensed })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut condensed = Vec::with_capacity(size * size.saturating_sub(1) / 2);
        for i in 0..size {
            for j in i + 1..size {
                condensed.push(f(i, j));
            }
        }
        Self::new(size, condensed)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn condensed(&self) -> &[f64] {
        &self.condensed
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.condensed[i * self.size - i * (i + 1) / 2 + (j - i - 1)]
    }
}

/// `1 - AMI` between every pair of ensemble members.
pub fn pairwise_distances(ensemble: &Ensemble) -> Result<DistanceMatrix> {
    let m = ensemble.len();
    if m < 2 {
        return Err(Error::TooFewItems { needed: 2, got: m });
    }
    let members = ensemble.members();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect();
    let condensed = pairs
        .par_iter()
        .map(|&(i, j)| Ok(1.0 - ami(&members[i].labeling, &members[j].labeling)?.value))
        .collect::<Result<Vec<f64>>>()?;
    DistanceMatrix::new(m, condensed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Node ids: leaves are `0..m`, the cluster formed by merge `i` is `m + i`.
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Single-linkage dendrogram together with the spanning-tree edges it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageTree {
    leaves: usize,
    merges: Vec<Merge>,
    edges: Vec<(usize, usize, f64)>,
}

impl LinkageTree {
    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut x = x;
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

pub fn single_linkage(distances: &DistanceMatrix) -> LinkageTree {
    let m = distances.size();
    let mut edges = Vec::with_capacity(m.saturating_sub(1));
    if m > 1 {
        // Prim's algorithm on the dense graph.
        let mut in_tree = vec![false; m];
        let mut best = vec![f64::INFINITY; m];
        let mut parent = vec![0usize; m];
        in_tree[0] = true;
        let mut last = 0;
        for _ in 1..m {
            let mut next = None;
            for x in 0..m {
                if in_tree[x] {
                    continue;
                }
                let d = distances.get(last, x);
                if d < best[x] {
                    best[x] = d;
                    parent[x] = last;
                }
                if next.is_none_or(|n: usize| best[x] < best[n]) {
                    next = Some(x);
                }
            }
            let x = next.expect("a vertex outside the tree");
            in_tree[x] = true;
            edges.push((parent[x].min(x), parent[x].max(x), best[x]));
            last = x;
        }
        edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    }

    let mut set = DisjointSet::new(m);
    let mut node_of_root: Vec<usize> = (0..m).collect();
    let mut size_of_root = vec![1usize; m];
    let mut merges = Vec::with_capacity(edges.len());
    for (i, &(a, b, distance)) in edges.iter().enumerate() {
        let (ra, rb) = (set.find(a), set.find(b));
        let (na, nb) = (node_of_root[ra], node_of_root[rb]);
        let size = size_of_root[ra] + size_of_root[rb];
        set.union(ra, rb);
        let root = set.find(a);
        node_of_root[root] = m + i;
        size_of_root[root] = size;
        merges.push(Merge {
            left: na.min(nb),
            right: na.max(nb),
            distance,
            size,
        });
    }
    LinkageTree {
        leaves: m,
        merges,
        edges,
    }
}

/// Connected components when every pair with `d ≤ tau` is linked. Groups are
/// ordered by their smallest member.
pub fn flat_cut(tree: &LinkageTree, tau: f64) -> Vec<Vec<usize>> {
    let m = tree.leaves;
    let mut set = DisjointSet::new(m);
    for &(a, b, d) in &tree.edges {
        if d <= tau {
            set.union(a, b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of_root = vec![usize::MAX; m];
    for x in 0..m {
        let root = set.find(x);
        if group_of_root[root] == usize::MAX {
            group_of_root[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[group_of_root[root]].push(x);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Min,
    Max,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Min => "min",
            Strategy::Max => "max",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Strategy::Min),
            "max" => Ok(Strategy::Max),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingResult {
    pub threshold: f64,
    pub groups: Vec<Vec<usize>>,
    pub strategy: Strategy,
    /// Set when no grid threshold yields exactly the requested group count.
    pub approximate: bool,
}

type Cut = (f64, Vec<Vec<usize>>);

/// Picks the smallest (`Min`) or largest (`Max`) grid threshold whose cut
/// has exactly `t` groups, or the closest count when none does.
pub fn threshold_search(tree: &LinkageTree, t: usize, strategy: Strategy) -> GroupingResult {
    let grid = threshold_grid();
    let cuts: Vec<Cut> = grid
        .iter()
        .map(|&tau| (tau, flat_cut(tree, tau)))
        .collect();
    let ordered: Box<dyn Iterator<Item = &Cut>> = match strategy {
        Strategy::Min => Box::new(cuts.iter()),
        Strategy::Max => Box::new(cuts.iter().rev()),
    };
    // First in strategy order among those with the smallest |#groups - t|.
    let (best, gap) = ordered
        .map(|cut| (cut, cut.1.len().abs_diff(t)))
        .fold(None, |acc: Option<(&Cut, usize)>, (cut, gap)| match acc {
            Some((_, best_gap)) if best_gap <= gap => acc,
            _ => Some((cut, gap)),
        })
        .expect("non-empty grid");
    GroupingResult {
        threshold: best.0,
        groups: best.1.clone(),
        strategy,
        approximate: gap != 0,
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::kmeans::rng_for;
    use crate::model::Labeling;
    use rand::Rng;

    /// Components of the graph with edges `d ≤ tau`, by depth-first search.
    fn components_oracle(d: &DistanceMatrix, tau: f64) -> Vec<Vec<usize>> {
        let m = d.size();
        let mut seen = vec![false; m];
        let mut out = Vec::new();
        for start in 0..m {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(x) = stack.pop() {
                comp.push(x);
                for y in 0..m {
                    if !seen[y] && d.get(x, y) <= tau {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    fn two_block() -> DistanceMatrix {
        // {0, 1, 2} and {3, 4, 5}
        DistanceMatrix::from_fn(6, |i, j| if (i < 3) == (j < 3) { 0.1 } else { 0.9 }).unwrap()
    }

    #[test]
    fn grid_has_49_points() {
        let grid = threshold_grid();
        assert_eq!(grid.len(), 49);
        assert_eq!(grid[0], 0.02);
        assert_eq!(grid[4], 0.1);
        assert_eq!(grid[48], 0.98);
        for w in grid.windows(2) {
            assert!((w[1] - w[0] - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn condensed_indexing() {
        let d = DistanceMatrix::from_fn(4, |i, j| (10 * i + j) as f64).unwrap();
        assert_eq!(d.get(1, 3), 13.0);
        assert_eq!(d.get(3, 1), 13.0);
        assert_eq!(d.get(2, 2), 0.0);
        assert!(DistanceMatrix::new(3, vec![0.1]).is_err());
    }

    #[test]
    fn three_point_trace() {
        let d = DistanceMatrix::new(3, vec![0.1, 0.9, 0.9]).unwrap();
        let tree = single_linkage(&d);
        let merges = tree.merges();
        assert_eq!(merges.len(), 2);
        assert_eq!((merges[0].left, merges[0].right, merges[0].distance), (0, 1, 0.1));
        assert_eq!((merges[1].left, merges[1].right, merges[1].distance), (2, 3, 0.9));
        assert_eq!(merges[1].size, 3);
    }

    #[test]
    fn zero_distances_merge_at_zero() {
        let d = DistanceMatrix::from_fn(5, |_, _| 0.0).unwrap();
        let tree = single_linkage(&d);
        assert!(tree.merges().iter().all(|m| m.distance == 0.0));
        let result = threshold_search(&tree, 1, Strategy::Min);
        assert_eq!(result.threshold, 0.02);
        assert_eq!(threshold_search(&tree, 1, Strategy::Max).threshold, 0.98);
    }

    #[test]
    fn flat_cut_extremes_and_blocks() {
        let d = two_block();
        let tree = single_linkage(&d);
        assert_eq!(flat_cut(&tree, 0.05).len(), 6);
        assert_eq!(flat_cut(&tree, 0.95).len(), 1);
        assert_eq!(flat_cut(&tree, 0.5), vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn two_block_threshold_search() {
        let tree = single_linkage(&two_block());
        let min = threshold_search(&tree, 2, Strategy::Min);
        let max = threshold_search(&tree, 2, Strategy::Max);
        assert_eq!(min.threshold, 0.1);
        assert_eq!(max.threshold, 0.88);
        assert!(!min.approximate && !max.approximate);
        assert_eq!(max.groups, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn separated_singletons_match_everywhere() {
        let d = DistanceMatrix::from_fn(4, |i, j| 0.99 + 0.001 * (i + j) as f64).unwrap();
        let tree = single_linkage(&d);
        let result = threshold_search(&tree, 4, Strategy::Min);
        assert_eq!(result.threshold, 0.02);
        assert!(!result.approximate);
        assert_eq!(threshold_search(&tree, 4, Strategy::Max).threshold, 0.98);
    }

    #[test]
    fn unreachable_count_is_flagged() {
        // Cuts give 3 groups up to 0.48 and 1 group from 0.5; t = 2 is never hit.
        let d = DistanceMatrix::new(3, vec![0.5, 0.5, 0.5]).unwrap();
        let tree = single_linkage(&d);
        let min = threshold_search(&tree, 2, Strategy::Min);
        assert!(min.approximate);
        assert_eq!(min.threshold, 0.02);
        assert_eq!(min.groups.len(), 3);
        let max = threshold_search(&tree, 2, Strategy::Max);
        assert_eq!(max.threshold, 0.98);
        assert_eq!(max.groups.len(), 1);
    }

    #[test]
    fn flat_cut_matches_components_on_random_matrices() {
        let mut rng = rng_for(17);
        for _ in 0..100 {
            let m = rng.random_range(2..10);
            let d = DistanceMatrix::from_fn(m, |_, _| rng.random::<f64>() * 1.2).unwrap();
            let tree = single_linkage(&d);
            for w in tree.merges().windows(2) {
                assert!(w[0].distance <= w[1].distance);
            }
            let mut previous = usize::MAX;
            for tau in threshold_grid() {
                let cut = flat_cut(&tree, tau);
                assert_eq!(cut, components_oracle(&d, tau));
                assert!(cut.len() <= previous);
                previous = cut.len();
            }
        }
    }

    #[test]
    fn pairwise_distances_use_ami() {
        let a = Labeling::new(&[0, 0, 1, 1, 2, 2]).unwrap();
        let b = Labeling::new(&[0, 0, 0, 1, 1, 1]).unwrap();
        let ens = Ensemble::from_labelings([a.clone(), a.clone(), b.clone()]).unwrap();
        let d = pairwise_distances(&ens).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        let expected = 1.0 - crate::metrics::oracle::ami(a.labels(), b.labels());
        assert!((d.get(0, 2) - expected).abs() < 1e-12);
        assert_eq!(d.get(2, 0), d.get(0, 2));

        let relabeled = Labeling::new(&[2, 2, 0, 0, 1, 1]).unwrap();
        let ens2 = Ensemble::from_labelings([relabeled, a, b]).unwrap();
        assert_eq!(pairwise_distances(&ens2).unwrap(), d);

        let one = Ensemble::from_labelings([Labeling::new(&[0, 1]).unwrap()]).unwrap();
        assert!(pairwise_distances(&one).is_err());
    }
}
