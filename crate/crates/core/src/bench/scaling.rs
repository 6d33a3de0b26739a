use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::Result;
use crate::graph::SparseGraph;
use crate::guard::{edge_similarities, estimate_importance, memory_update, prune};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub edges: usize,
    pub nodes: usize,
    pub dim: usize,
    /// Median wall time of one estimation pass.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("edges,nodes,dim,seconds\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{:.9}\n",
                p.edges, p.nodes, p.dim, p.seconds
            ));
        }
        s.push_str(&format!(
            "# fit: seconds = {:.6e} * edges + {:.6e}, R^2 = {:.4}\n",
            self.slope, self.intercept, self.r_squared
        ));
        s
    }
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, R^2)`. R^2 is 1
/// when `y` is constant.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (slope, intercept, r2)
}

/// Uniform random simple graph with `edges` edges on `edges / 4` nodes
/// (more when needed to fit) with features uniform in `[-1, 1]`.
pub fn random_graph(edges: usize, dim: usize, seed: u64) -> Result<SparseGraph> {
    let mut n = (edges / 4).max(1);
    while n * (n - 1) / 2 < edges * 2 {
        n += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::with_capacity(edges);
    let mut list = Vec::with_capacity(edges);
    while list.len() < edges {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u != v && seen.insert((u.min(v), u.max(v))) {
            list.push((u, v));
        }
    }
    let features = Tensor::uniform(vec![n, dim], 1.0, &mut rng);
    Ok(SparseGraph::from_edges(n, &list, Some(features), vec![0; n])?.0)
}

/// One layer's defense work: similarities, importance, pruning and memory.
pub fn estimation_pass(graph: &SparseGraph, h: &Tensor, prev: &[f64]) -> Result<Vec<f64>> {
    let s = edge_similarities(graph, h)?;
    let alpha = estimate_importance(graph, &s)?;
    let pruned = prune(graph, &alpha.weights, [0.5, 0.5], 0.5)?;
    memory_update(Some(prev), &pruned.weights, 0.5, 1)
}

/// Times [`estimation_pass`] at every size and fits time against edge count.
pub fn scaling_bench(sizes: &[usize], dim: usize, reps: usize, seed: u64) -> Result<ScalingReport> {
    let mut points = Vec::with_capacity(sizes.len());
    for &e in sizes {
        let graph = random_graph(e, dim, seed)?;
        let h = graph
            .features()
            .expect("random graphs carry features")
            .clone();
        let prev = vec![1.0 / 3.0; graph.n_directed() + graph.n_nodes()];
        estimation_pass(&graph, &h, &prev)?;
        let mut times = Vec::with_capacity(reps.max(1));
        for _ in 0..reps.max(1) {
            let t = Instant::now();
            std::hint::black_box(estimation_pass(&graph, &h, &prev)?);
            times.push(t.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        points.push(ScalingPoint {
            edges: e,
            nodes: graph.n_nodes(),
            dim,
            seconds: times[times.len() / 2],
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.edges as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    Ok(ScalingReport {
        points,
        slope,
        intercept,
        r_squared,
    })
}
