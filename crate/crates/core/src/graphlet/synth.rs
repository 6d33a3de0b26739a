use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Structural roles of the cycle-with-houses graph, used as labels.
pub mod role {
    pub const CYCLE: usize = 0;
    /// Cycle node next to an anchor.
    pub const CYCLE_NEAR: usize = 1;
    pub const ANCHOR: usize = 2;
    pub const BASE: usize = 3;
    pub const TOP: usize = 4;
    pub const ROOF: usize = 5;
    pub const COUNT: usize = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleHouseSpec {
    pub cycle_len: usize,
    pub houses: usize,
    pub seed: u64,
}

impl CycleHouseSpec {
    /// 500-node cycle with 100 houses anchored on every fifth cycle node:
    /// 1,000 nodes, all six roles.
    pub fn reference(seed: u64) -> Self {
        Self {
            cycle_len: 500,
            houses: 100,
            seed,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.cycle_len + 5 * self.houses
    }
}

/// A cycle with five-node houses (a square with a roof on top) hung off
/// evenly spaced anchor nodes. The anchor is wired to both base corners, so
/// the two halves of each house are mirror images. Node ids are shuffled by
/// `seed`; the graph has no features.
pub fn gen_cycle_house(spec: &CycleHouseSpec) -> Result<SparseGraph> {
    if spec.cycle_len < 3 || spec.houses == 0 || spec.houses > spec.cycle_len {
        return Err(Error::validation(format!(
            "cycle of {} nodes cannot carry {} houses",
            spec.cycle_len, spec.houses
        )));
    }
    let n = spec.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);

    let c = spec.cycle_len;
    let spacing = c / spec.houses;
    let mut labels = vec![role::CYCLE; n];
    let mut edges = Vec::with_capacity(c + 8 * spec.houses);
    for i in 0..c {
        edges.push((ids[i], ids[(i + 1) % c]));
    }
    for h in 0..spec.houses {
        let i = h * spacing;
        for j in [(i + 1) % c, (i + c - 1) % c] {
            labels[ids[j]] = role::CYCLE_NEAR;
        }
    }
    for h in 0..spec.houses {
        let anchor = ids[h * spacing];
        let base = c + 5 * h;
        let [b0, b1, t0, t1, roof] = std::array::from_fn(|i| ids[base + i]);
        labels[anchor] = role::ANCHOR;
        labels[b0] = role::BASE;
        labels[b1] = role::BASE;
        labels[t0] = role::TOP;
        labels[t1] = role::TOP;
        labels[roof] = role::ROOF;
        edges.extend([
            (anchor, b0),
            (anchor, b1),
            (b0, b1),
            (b0, t0),
            (b1, t1),
            (t0, t1),
            (t0, roof),
            (t1, roof),
        ]);
    }
    Ok(SparseGraph::from_edges(n, &edges, None, labels)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmSpec {
    pub n_nodes: usize,
    pub n_clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Scale of the class mean relative to unit Gaussian noise.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            n_nodes: 800,
            n_clusters: 4,
            p_in: 0.05,
            p_out: 0.002,
            feature_dim: 32,
            signal: 1.0,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.n_clusters == 0 || self.feature_dim == 0 {
            return Err(Error::validation("SBM sizes must be positive"));
        }
        if self.n_clusters > self.n_nodes {
            return Err(Error::validation("more clusters than nodes"));
        }
        for p in [self.p_in, self.p_out] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!(
                    "edge probability {p} outside [0, 1]"
                )));
            }
        }
        if !self.signal.is_finite() || self.signal < 0.0 {
            return Err(Error::validation("signal strength must be nonnegative"));
        }
        Ok(())
    }
}

/// Class mean used by [`gen_sbm`]: ones on the `c`-th of `n_clusters`
/// contiguous blocks of feature dimensions, zeros elsewhere.
pub fn sbm_class_mean(c: usize, n_clusters: usize, feature_dim: usize) -> Vec<f64> {
    (0..feature_dim)
        .map(|j| {
            if j * n_clusters / feature_dim == c {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Planted-partition graph with Gaussian node features around per-class means.
/// Node `u` belongs to cluster `u * n_clusters / n_nodes`.
pub fn gen_sbm(spec: &SbmSpec) -> Result<SparseGraph> {
    spec.validate()?;
    let n = spec.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..n).map(|u| u * spec.n_clusters / n).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let means: Vec<Vec<f64>> = (0..spec.n_clusters)
        .map(|c| sbm_class_mean(c, spec.n_clusters, spec.feature_dim))
        .collect();
    let mut data = Vec::with_capacity(n * spec.feature_dim);
    for &y in &labels {
        for j in 0..spec.feature_dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(spec.signal * means[y][j] + noise);
        }
    }
    let features = Tensor::matrix(n, spec.feature_dim, data)?;
    Ok(SparseGraph::from_edges(n, &edges, Some(features), labels)?.0)
}
