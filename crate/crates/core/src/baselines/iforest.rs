//! Isolation forest.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SamRng};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Harmonic number `H(i)`: exact summation for small `i`, asymptotic series above.
fn harmonic(i: usize) -> f64 {
    if i <= 1024 {
        (1..=i).map(|k| 1.0 / k as f64).sum()
    } else {
        let x = i as f64;
        x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x) + 1.0 / (120.0 * x.powi(4))
    }
}

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` nodes: `c(n) = 2·H(n−1) − 2(n−1)/n`, with `c(0) = c(1) = 0`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    2.0 * harmonic(n - 1) - 2.0 * (n - 1) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestConfig {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
}

impl Default for IsolationForestConfig {
    fn default() -> Self {
        IsolationForestConfig {
            n_trees: 100,
            subsample_size: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Internal {
        feature: usize,
        split: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

/// One random partition tree, stored as a flat node arena rooted at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn grow(rows: &[f64], d: usize, sample: Vec<usize>, max_depth: usize, rng: &mut SamRng) -> Self {
        let mut tree = IsolationTree { nodes: Vec::new() };
        tree.build(rows, d, sample, 0, max_depth, rng);
        tree
    }

    fn build(
        &mut self,
        rows: &[f64],
        d: usize,
        sample: Vec<usize>,
        depth: usize,
        max_depth: usize,
        rng: &mut SamRng,
    ) -> usize {
        let id = self.nodes.len();
        if depth >= max_depth || sample.len() <= 1 {
            self.nodes.push(Node::Leaf { size: sample.len() });
            return id;
        }
        // features that still vary inside this node
        let ranges: Vec<(usize, f64, f64)> = (0..d)
            .filter_map(|j| {
                let (lo, hi) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = rows[i * d + j];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            self.nodes.push(Node::Leaf { size: sample.len() });
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let mut split = lo + (hi - lo) * rng.random::<f64>();
        if split <= lo {
            split = 0.5 * (lo + hi);
        }
        let (left, right): (Vec<usize>, Vec<usize>) = sample.into_iter().partition(|&i| rows[i * d + feature] < split);

        self.nodes.push(Node::Leaf { size: 0 });
        let l = self.build(rows, d, left, depth + 1, max_depth, rng);
        let r = self.build(rows, d, right, depth + 1, max_depth, rng);
        self.nodes[id] = Node::Internal {
            feature,
            split,
            left: l,
            right: r,
        };
        id
    }

    /// Edges traversed to reach a leaf plus `c(leaf size)`.
    pub fn path_length(&self, point: &[f64]) -> f64 {
        let mut node = 0;
        let mut edges = 0.0;
        loop {
            match &self.nodes[node] {
                Node::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    node = if point[*feature] < *split { *left } else { *right };
                    edges += 1.0;
                }
                Node::Leaf { size } => return edges + average_path_length(*size),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Sizes recorded at the leaves; they add up to the subsample size.
    pub fn leaf_sizes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { size } => Some(*size),
                Node::Internal { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestModel {
    trees: Vec<IsolationTree>,
    /// Effective subsample size `ψ = min(subsample_size, n)`.
    subsample_size: usize,
    c_norm: f64,
    d: usize,
}

/// Builds `n_trees` trees, each on its own subsample of `min(ψ, n)` rows
/// drawn without replacement, depth-capped at `⌈log₂ ψ⌉`. Tree `t` uses seed
/// `derive_seed(seed, t)`.
pub fn iforest_fit(train: &DMatrix<f64>, cfg: &IsolationForestConfig) -> Result<IsolationForestModel> {
    let (n, d) = train.shape();
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, found: n });
    }
    if cfg.n_trees == 0 || cfg.subsample_size < 2 {
        return Err(Error::InvalidConfig(
            "isolation forest needs at least one tree and a subsample of at least 2".into(),
        ));
    }
    let psi = cfg.subsample_size.min(n);
    let max_depth = (psi as f64).log2().ceil() as usize;
    let rows: Vec<f64> = (0..n)
        .flat_map(|i| train.row(i).iter().copied().collect::<Vec<_>>())
        .collect();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, t as u64));
            let sample = index::sample(&mut rng, n, psi).into_vec();
            IsolationTree::grow(&rows, d, sample, max_depth, &mut rng)
        })
        .collect();
    Ok(IsolationForestModel {
        trees,
        subsample_size: psi,
        c_norm: average_path_length(psi),
        d,
    })
}

impl IsolationForestModel {
    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    pub fn mean_path_length(&self, point: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(point)).sum::<f64>() / self.trees.len() as f64
    }

    /// `2^(−E[h(x)] / c(ψ))` per row.
    pub fn score(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.ncols(),
            });
        }
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                2f64.powf(-self.mean_path_length(&row) / self.c_norm)
            })
            .collect())
    }
}
