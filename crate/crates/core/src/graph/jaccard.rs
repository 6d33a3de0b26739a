use super::SparseGraph;
use crate::error::{Error, Result};

/// Jaccard index of the supports of two binary vectors. Two empty supports
/// count as identical.
pub fn jaccard_similarity(a: &[f64], b: &[f64]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x != 0.0, *y != 0.0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Removes every edge whose endpoints have feature Jaccard similarity below
/// `threshold`.
pub fn jaccard_preprocess(graph: &SparseGraph, threshold: f64) -> Result<SparseGraph> {
    let features = graph
        .features()
        .ok_or_else(|| Error::validation("jaccard preprocessing needs node features"))?;
    if features.data().iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::validation(
            "jaccard preprocessing needs binary features; use the guard's cosine similarity for continuous features",
        ));
    }
    let adjacency = (0..graph.n_nodes())
        .map(|u| {
            graph
                .neighbors(u)
                .iter()
                .copied()
                .filter(|&v| jaccard_similarity(features.row(u), features.row(v)) >= threshold)
                .collect()
        })
        .collect();
    graph.with_adjacency(adjacency)
}
