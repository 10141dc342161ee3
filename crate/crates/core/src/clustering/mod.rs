//! Density clustering of window embeddings and conversion of clusters into
//! price levels.

mod levels;
mod pipeline;

pub use levels::{
    extract_support_levels, median, SupportLevel, SupportLevelSet, LEVEL_MERGE_TOLERANCE,
};
pub use pipeline::{detect_deepsupp, run_deepsupp, DeepSuppConfig, DeepSuppRun, DEEPSUPP_METHOD};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

pub const NOISE: i64 = -1;
pub const DEFAULT_EPS: f64 = 0.025;
pub const MIN_SAMPLES_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterLabels {
    /// `-1` for noise, otherwise a cluster id in `0..cluster_count()`.
    pub labels: Vec<i64>,
    pub eps: f64,
    pub min_samples: usize,
}

impl ClusterLabels {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Point indices of each cluster, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// `max(2, round(0.1 · n))`.
pub fn default_min_samples(point_count: usize) -> usize {
    ((MIN_SAMPLES_FRACTION * point_count as f64).round() as usize).max(2)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Result<ClusterLabels> {
    dbscan_with(points, eps, min_samples, Execution::default())
}

/// DBSCAN with Euclidean distance. A point's neighbourhood is every point at
/// distance `<= eps`, itself included; it is a core point when that
/// neighbourhood holds at least `min_samples` points.
///
/// Clusters are the connected components of core points, numbered in order
/// of their lowest point index. A non-core point within `eps` of some core
/// point joins the cluster of its nearest core neighbour (equal distances go
/// to the lower cluster id); all other points are noise.
pub fn dbscan_with(
    points: &[Vec<f64>],
    eps: f64,
    min_samples: usize,
    exec: Execution,
) -> Result<ClusterLabels> {
    if points.is_empty() {
        return Err(Error::Config("dbscan needs at least one point".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("dbscan eps must be positive, got {eps}")));
    }
    if min_samples == 0 {
        return Err(Error::Config("dbscan min_samples must be at least 1".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Config("dbscan points differ in dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dbscan"));
    }

    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = exec::map_range(exec, points.len(), |i| {
        (0..points.len())
            .filter(|&j| squared_distance(&points[i], &points[j]) <= eps2)
            .collect()
    });
    let core: Vec<bool> = neighbours.iter().map(|n| n.len() >= min_samples).collect();

    let mut labels = vec![NOISE; points.len()];
    let mut next = 0i64;
    let mut stack = Vec::new();
    for seed in 0..points.len() {
        if !core[seed] || labels[seed] != NOISE {
            continue;
        }
        labels[seed] = next;
        stack.push(seed);
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if core[q] && labels[q] == NOISE {
                    labels[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }

    for i in 0..points.len() {
        if core[i] {
            continue;
        }
        let mut best: Option<(f64, i64)> = None;
        for &j in neighbours[i].iter().filter(|&&j| core[j]) {
            let cand = (squared_distance(&points[i], &points[j]), labels[j]);
            if best.is_none_or(|b| cand < b) {
                best = Some(cand);
            }
        }
        if let Some((_, id)) = best {
            labels[i] = id;
        }
    }

    Ok(ClusterLabels {
        labels,
        eps,
        min_samples,
    })
}
