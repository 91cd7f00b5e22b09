//! Brute-force k-nearest-neighbour scores: mean kNN distance and LOF.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Floor added to the mean reachability distance so duplicate points keep a
/// finite local reachability density.
const REACH_FLOOR: f64 = 1e-10;

/// `max(1, round(ln n))`, rounding half up.
pub fn default_k(n: usize) -> usize {
    ((n.max(1) as f64).ln() + 0.5).floor().max(1.0) as usize
}

/// Exact neighbour search over a row-major copy of the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    points: Vec<f64>,
    n: usize,
    d: usize,
    k: usize,
}

impl NeighborIndex {
    pub fn new(train: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, d) = train.shape();
        if k < 1 || k >= n {
            return Err(Error::InvalidConfig(format!("k = {k} must satisfy 1 <= k < n = {n}")));
        }
        let points = (0..n)
            .flat_map(|i| train.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        Ok(NeighborIndex { points, n, d, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// The `k` nearest training points as `(distance, index)`, closest first.
    /// Ties are broken by index. `exclude` skips one training index.
    pub fn nearest(&self, query: &[f64], exclude: Option<usize>) -> Vec<(f64, usize)> {
        let k = self.k;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for i in 0..self.n {
            if Some(i) == exclude {
                continue;
            }
            let dist = euclidean(query, self.point(i));
            if best.len() == k && dist >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= dist);
            best.insert(pos, (dist, i));
            best.truncate(k);
        }
        best
    }

    /// Mean distance to the `k` nearest training points.
    pub fn knn_score(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(rows(x)
            .into_par_iter()
            .map(|q| mean_dist(&self.nearest(&q, None)))
            .collect())
    }

    /// kNN score of every training point, each excluded from its own neighbourhood.
    pub fn knn_score_training(&self) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| mean_dist(&self.nearest(self.point(i), Some(i))))
            .collect()
    }

    /// Precomputes k-distances and local reachability densities of the training points.
    pub fn lof(&self) -> LofModel {
        let neighbors: Vec<Vec<(f64, usize)>> = (0..self.n)
            .into_par_iter()
            .map(|i| self.nearest(self.point(i), Some(i)))
            .collect();
        let k_distance: Vec<f64> = neighbors.iter().map(|nb| nb[nb.len() - 1].0).collect();
        let lrd = neighbors
            .iter()
            .map(|nb| local_reachability_density(nb, &k_distance))
            .collect();
        LofModel {
            index: self.clone(),
            k_distance,
            lrd,
        }
    }
}

/// Local outlier factor over a fitted [`NeighborIndex`].
#[derive(Debug, Clone, PartialEq)]
pub struct LofModel {
    index: NeighborIndex,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

impl LofModel {
    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    fn factor(&self, neighbors: &[(f64, usize)]) -> f64 {
        let own = local_reachability_density(neighbors, &self.k_distance);
        neighbors.iter().map(|&(_, o)| self.lrd[o]).sum::<f64>() / (neighbors.len() as f64 * own)
    }

    /// LOF of new points relative to the training set.
    pub fn score(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.index.check_dim(x)?;
        Ok(rows(x)
            .into_par_iter()
            .map(|q| self.factor(&self.index.nearest(&q, None)))
            .collect())
    }

    /// LOF of each training point, excluding itself from its neighbourhood.
    pub fn score_training(&self) -> Vec<f64> {
        (0..self.index.n)
            .into_par_iter()
            .map(|i| self.factor(&self.index.nearest(self.index.point(i), Some(i))))
            .collect()
    }
}

/// Inverse of the mean of `max(k-distance(o), d(p, o))` over the neighbours `o`.
fn local_reachability_density(neighbors: &[(f64, usize)], k_distance: &[f64]) -> f64 {
    let mean_reach = neighbors.iter().map(|&(dist, o)| dist.max(k_distance[o])).sum::<f64>() / neighbors.len() as f64;
    1.0 / (mean_reach + REACH_FLOOR)
}

fn mean_dist(nb: &[(f64, usize)]) -> f64 {
    nb.iter().map(|&(d, _)| d).sum::<f64>() / nb.len() as f64
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
