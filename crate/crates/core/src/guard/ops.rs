use rayon::prelude::*;

use crate::autodiff::{dot, norm2, sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::graphlet::GdvTable;

/// Cosine similarity; zero when either vector has zero norm.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("similarity", &[a.len()], &[b.len()]));
    }
    let denom = norm2(a) * norm2(b);
    Ok(if denom > 0.0 { dot(a, b) / denom } else { 0.0 })
}

/// Cosine similarity of the `log(1 + count)` graphlet degree vectors of `u` and `v`.
pub fn graphlet_similarity(u: usize, v: usize, table: &GdvTable) -> Result<f64> {
    let (a, b) = (table.log_scaled(u)?, table.log_scaled(v)?);
    similarity(&a, &b)
}

/// Similarity for every stored edge of `graph`, computed from embedding rows.
pub fn edge_similarities(graph: &SparseGraph, h: &Tensor) -> Result<Vec<f64>> {
    if h.rows() != graph.n_nodes() {
        return Err(Error::shape(
            "edge_similarities",
            &[graph.n_nodes()],
            h.shape(),
        ));
    }
    let norms: Vec<f64> = (0..graph.n_nodes()).map(|u| norm2(h.row(u))).collect();
    let rows: Vec<Vec<f64>> = (0..graph.n_nodes())
        .into_par_iter()
        .map(|u| {
            graph
                .neighbors(u)
                .iter()
                .map(|&v| {
                    let denom = norms[u] * norms[v];
                    if denom > 0.0 {
                        dot(h.row(u), h.row(v)) / denom
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.concat())
}

/// Importance weights for every stored edge and every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Importance {
    /// One entry per stored edge, then one self weight per node.
    pub weights: Vec<f64>,
    /// Number of neighbors with strictly positive (clamped) similarity.
    pub support: Vec<usize>,
}

impl Importance {
    pub fn edge(&self, e: usize) -> f64 {
        self.weights[e]
    }

    pub fn self_weight(&self, graph: &SparseGraph, u: usize) -> f64 {
        self.weights[graph.n_directed() + u]
    }
}

/// Normalizes per-edge similarities within each closed neighborhood.
/// Negative similarities are clamped to zero first.
pub fn estimate_importance(graph: &SparseGraph, similarities: &[f64]) -> Result<Importance> {
    let nnz = graph.n_directed();
    if similarities.len() != nnz {
        return Err(Error::shape(
            "estimate_importance",
            &[nnz],
            &[similarities.len()],
        ));
    }
    let rows: Vec<(Vec<f64>, f64, usize)> = (0..graph.n_nodes())
        .into_par_iter()
        .map(|u| {
            let s: Vec<f64> = similarities[graph.edge_range(u)]
                .iter()
                .map(|x| x.max(0.0))
                .collect();
            let support = s.iter().filter(|&&x| x > 0.0).count();
            if support == 0 {
                return (vec![0.0; s.len()], 1.0, 0);
            }
            let total: f64 = s.iter().sum();
            let shrink = support as f64 / (support as f64 + 1.0);
            let alpha = s.iter().map(|x| x / total * shrink).collect();
            (alpha, 1.0 / (support as f64 + 1.0), support)
        })
        .collect();
    let mut weights = Vec::with_capacity(nnz + graph.n_nodes());
    let mut selfs = Vec::with_capacity(graph.n_nodes());
    let mut support = Vec::with_capacity(graph.n_nodes());
    for (alpha, self_w, count) in rows {
        weights.extend(alpha);
        selfs.push(self_w);
        support.push(count);
    }
    weights.extend(selfs);
    Ok(Importance { weights, support })
}

pub fn estimate_importance_from_embeddings(graph: &SparseGraph, h: &Tensor) -> Result<Importance> {
    estimate_importance(graph, &edge_similarities(graph, h)?)
}

/// Outcome of the pruning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    /// `alpha_hat`, same layout as [`Importance::weights`].
    pub weights: Vec<f64>,
    /// `sigmoid(c_uv . W)` per stored edge.
    pub scores: Vec<f64>,
    pub kept: Vec<bool>,
}

/// Scores each direction of each edge with its own characteristic vector
/// `[alpha_uv, alpha_vu]` and zeroes the importance of edges scoring below
/// `p0`. Self weights are never pruned.
pub fn prune(graph: &SparseGraph, alpha: &[f64], w: [f64; 2], p0: f64) -> Result<Pruned> {
    let nnz = graph.n_directed();
    if alpha.len() != nnz + graph.n_nodes() {
        return Err(Error::shape(
            "prune",
            &[nnz + graph.n_nodes()],
            &[alpha.len()],
        ));
    }
    let mut weights = alpha.to_vec();
    let mut scores = Vec::with_capacity(nnz);
    let mut kept = Vec::with_capacity(nnz);
    for e in 0..nnz {
        let score = sigmoid(alpha[e] * w[0] + alpha[graph.reverse_edge(e)] * w[1]);
        let keep = score >= p0;
        if !keep {
            weights[e] = 0.0;
        }
        scores.push(score);
        kept.push(keep);
    }
    Ok(Pruned {
        weights,
        scores,
        kept,
    })
}

/// Layer-wise graph memory. Layer 0 ignores `prev` and returns `alpha_hat`.
pub fn memory_update(
    prev: Option<&[f64]>,
    alpha_hat: &[f64],
    beta: f64,
    layer: usize,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::State(format!(
            "memory coefficient {beta} outside [0, 1]"
        )));
    }
    if layer == 0 {
        return Ok(alpha_hat.to_vec());
    }
    let prev =
        prev.ok_or_else(|| Error::State(format!("layer {layer} needs the previous coefficients")))?;
    if prev.len() != alpha_hat.len() {
        return Err(Error::shape(
            "memory_update",
            &[prev.len()],
            &[alpha_hat.len()],
        ));
    }
    Ok(prev
        .iter()
        .zip(alpha_hat)
        .map(|(p, a)| beta * p + (1.0 - beta) * a)
        .collect())
}
