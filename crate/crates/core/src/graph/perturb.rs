use std::collections::HashSet;

use super::SparseGraph;
use crate::adversary::Perturbation;
use crate::error::{Error, Result};

/// Returns the poisoned graph `A'`. Features, labels and masks are shared with
/// the original, which is left untouched.
pub fn apply_perturbation(graph: &SparseGraph, pert: &Perturbation) -> Result<SparseGraph> {
    if pert.len() > pert.budget {
        return Err(Error::Precondition(format!(
            "perturbation has {} modifications but the budget is {}",
            pert.len(),
            pert.budget
        )));
    }
    let n = graph.n_nodes();
    let mut adjacency = graph.adjacency_lists();
    let mut touched = HashSet::new();
    for &(u, v) in &pert.deletions {
        if u >= n || v >= n || !graph.has_edge(u, v) {
            return Err(Error::Precondition(format!(
                "cannot delete missing edge ({u}, {v})"
            )));
        }
        if !touched.insert((u.min(v), u.max(v))) {
            return Err(Error::Precondition(format!(
                "edge ({u}, {v}) modified twice"
            )));
        }
        adjacency[u].retain(|&x| x != v);
        adjacency[v].retain(|&x| x != u);
    }
    for &(u, v) in &pert.insertions {
        if u >= n || v >= n || u == v {
            return Err(Error::Precondition(format!(
                "cannot insert invalid edge ({u}, {v})"
            )));
        }
        if graph.has_edge(u, v) {
            return Err(Error::Precondition(format!(
                "cannot insert existing edge ({u}, {v})"
            )));
        }
        if !touched.insert((u.min(v), u.max(v))) {
            return Err(Error::Precondition(format!(
                "edge ({u}, {v}) modified twice"
            )));
        }
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    graph.with_adjacency(adjacency)
}
