//! Immutable undirected graphs in CSR form.
//!
//! Every undirected edge is stored twice, once per direction, so that each
//! stored entry is a directed edge `u -> v` with its own index. Self loops are
//! never stored; the self contribution of a node is handled analytically by
//! the models and the defense.

mod io;
mod jaccard;
mod perturb;
mod split;

use std::sync::Arc;

use crate::autodiff::{SparsePattern, Tensor};
use crate::error::{Error, Result};

pub use io::{
    load_edge_list, write_edge_list, write_features, write_labels, write_masks, LoadReport,
};
pub use jaccard::{jaccard_preprocess, jaccard_similarity};
pub use perturb::apply_perturbation;
pub use split::{split, SplitSpec};

/// Disjoint node masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn new(train: Vec<bool>, val: Vec<bool>, test: Vec<bool>) -> Result<Self> {
        if train.len() != val.len() || val.len() != test.len() {
            return Err(Error::validation("mask lengths differ"));
        }
        for i in 0..train.len() {
            if [train[i], val[i], test[i]].iter().filter(|&&b| b).count() > 1 {
                return Err(Error::validation(format!(
                    "node {i} is in more than one mask"
                )));
            }
        }
        Ok(Self { train, val, test })
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SparseGraph {
    pattern: Arc<SparsePattern>,
    sources: Vec<usize>,
    reverse: Vec<usize>,
    features: Option<Arc<Tensor>>,
    labels: Arc<Vec<usize>>,
    n_classes: usize,
    masks: Option<Arc<Masks>>,
}

impl PartialEq for SparseGraph {
    fn eq(&self, other: &Self) -> bool {
        self.pattern == other.pattern
            && self.features == other.features
            && self.labels == other.labels
            && self.n_classes == other.n_classes
            && self.masks == other.masks
    }
}

impl SparseGraph {
    /// Builds a graph from undirected edges. Duplicate pairs (in either
    /// orientation) collapse; self loops are dropped and counted.
    pub fn from_edges(
        n_nodes: usize,
        edges: &[(usize, usize)],
        features: Option<Tensor>,
        labels: Vec<usize>,
    ) -> Result<(Self, usize)> {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        let mut self_loops = 0;
        for &(u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::validation(format!(
                    "edge ({u}, {v}) references a node >= {n_nodes}"
                )));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let graph =
            Self::from_adjacency(adjacency, features.map(Arc::new), Arc::new(labels), None)?;
        Ok((graph, self_loops))
    }

    pub(crate) fn from_adjacency(
        mut adjacency: Vec<Vec<usize>>,
        features: Option<Arc<Tensor>>,
        labels: Arc<Vec<usize>>,
        masks: Option<Arc<Masks>>,
    ) -> Result<Self> {
        let n = adjacency.len();
        if labels.len() != n {
            return Err(Error::validation(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some(f) = &features {
            if f.shape().len() != 2 || f.rows() != n {
                return Err(Error::validation(format!(
                    "feature matrix {:?} for {n} nodes",
                    f.shape()
                )));
            }
        }
        if let Some(m) = &masks {
            if m.train.len() != n {
                return Err(Error::validation("mask length differs from node count"));
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        let mut sources = Vec::new();
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            indices.extend_from_slice(list);
            sources.extend(std::iter::repeat_n(u, list.len()));
            offsets.push(indices.len());
        }
        let pattern = SparsePattern::new(n, n, offsets, indices)?;
        let mut reverse = vec![0; pattern.nnz()];
        for u in 0..n {
            for e in pattern.row_range(u) {
                let v = pattern.indices()[e];
                let back = pattern.row(v).binary_search(&u).map_err(|_| {
                    Error::validation(format!("edge {u} -> {v} has no reverse entry"))
                })?;
                reverse[e] = pattern.offsets()[v] + back;
            }
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            pattern: Arc::new(pattern),
            sources,
            reverse,
            features,
            labels,
            n_classes,
            masks,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.pattern.n_rows()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.pattern.nnz() / 2
    }

    /// Number of stored directed entries (twice the undirected count).
    pub fn n_directed(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        self.pattern.row(u)
    }

    pub fn degree(&self, u: usize) -> usize {
        self.pattern.row_range(u).len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n_nodes()).map(|u| self.degree(u)).collect()
    }

    pub fn edge_range(&self, u: usize) -> std::ops::Range<usize> {
        self.pattern.row_range(u)
    }

    /// Index of the stored entry `u -> v`.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        if u >= self.n_nodes() {
            return None;
        }
        self.neighbors(u)
            .binary_search(&v)
            .ok()
            .map(|i| self.pattern.offsets()[u] + i)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_index(u, v).is_some()
    }

    pub fn edge_source(&self, e: usize) -> usize {
        self.sources[e]
    }

    pub fn edge_target(&self, e: usize) -> usize {
        self.pattern.indices()[e]
    }

    /// Index of `v -> u` given the index of `u -> v`.
    pub fn reverse_edge(&self, e: usize) -> usize {
        self.reverse[e]
    }

    /// Undirected edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_directed())
            .map(|e| (self.sources[e], self.pattern.indices()[e]))
            .filter(|(u, v)| u < v)
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n_nodes())
            .map(|u| self.neighbors(u).to_vec())
            .collect()
    }

    pub fn features(&self) -> Option<&Tensor> {
        self.features.as_deref()
    }

    #[cfg(test)]
    pub(crate) fn features_arc(&self) -> Option<&Arc<Tensor>> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.as_ref().map_or(0, |f| f.cols())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn masks(&self) -> Option<&Masks> {
        self.masks.as_deref()
    }

    pub fn with_masks(&self, masks: Masks) -> Result<Self> {
        if masks.train.len() != self.n_nodes() {
            return Err(Error::validation("mask length differs from node count"));
        }
        let mut g = self.clone();
        g.masks = Some(Arc::new(masks));
        Ok(g)
    }

    /// Replaces node features, keeping structure, labels and masks.
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != self.n_nodes() {
            return Err(Error::validation(format!(
                "feature matrix {:?} for {} nodes",
                features.shape(),
                self.n_nodes()
            )));
        }
        let mut g = self.clone();
        g.features = Some(Arc::new(features));
        Ok(g)
    }

    /// Same nodes, features, labels and masks over a new edge set.
    pub(crate) fn with_adjacency(&self, adjacency: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_adjacency(
            adjacency,
            self.features.clone(),
            self.labels.clone(),
            self.masks.clone(),
        )
    }

    /// Full scan of the structural invariants: sorted, deduplicated,
    /// symmetric, loop-free neighbor lists.
    pub fn check_invariants(&self) -> Result<()> {
        for u in 0..self.n_nodes() {
            let nb = self.neighbors(u);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::State(format!(
                    "neighbors of {u} not strictly ascending"
                )));
            }
            for &v in nb {
                if v == u {
                    return Err(Error::State(format!("self loop at {u}")));
                }
                if !self.has_edge(v, u) {
                    return Err(Error::State(format!("edge {u} -> {v} not mirrored")));
                }
            }
        }
        if self.degrees().iter().sum::<usize>() != 2 * self.n_edges() {
            return Err(Error::State(
                "degree sum differs from twice the edge count".into(),
            ));
        }
        if let Some(m) = &self.masks {
            Masks::new(m.train.clone(), m.val.clone(), m.test.clone())?;
        }
        Ok(())
    }
}
