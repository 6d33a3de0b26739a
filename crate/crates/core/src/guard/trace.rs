use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::graph::SparseGraph;

/// Defense values of one layer, all in stored-edge order. `importance`,
/// `pruned_importance` and `omega` carry the per-node self weights after the
/// edge entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub similarity: Vec<f64>,
    pub importance: Vec<f64>,
    pub prune_score: Vec<f64>,
    pub kept: Vec<bool>,
    pub pruned_importance: Vec<f64>,
    pub omega: Vec<f64>,
    /// Memory coefficient applied in this layer (0 in layer 0).
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GuardTrace {
    pub layers: Vec<LayerTrace>,
}

impl GuardTrace {
    /// Largest `|omega^k - beta omega^{k-1} - (1 - beta) alpha_hat^k|` over all
    /// layers and entries; layer 0 is compared against `alpha_hat^0`.
    pub fn recurrence_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, layer) in self.layers.iter().enumerate() {
            for i in 0..layer.omega.len() {
                let expected = if k == 0 {
                    layer.pruned_importance[i]
                } else {
                    let prev = self.layers[k - 1].omega[i];
                    layer.beta * prev + (1.0 - layer.beta) * layer.pruned_importance[i]
                };
                worst = worst.max((layer.omega[i] - expected).abs());
            }
        }
        worst
    }

    /// CSV of one layer: `u,v,s,alpha,score,pruned,omega`, one row per stored
    /// edge followed by one `u,u` row per node for the self weights.
    pub fn layer_csv(&self, graph: &SparseGraph, layer: usize) -> String {
        let t = &self.layers[layer];
        let nnz = graph.n_directed();
        let mut out = String::from("u,v,s,alpha,score,pruned,omega\n");
        for e in 0..nnz {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                graph.edge_source(e),
                graph.edge_target(e),
                t.similarity[e],
                t.importance[e],
                t.prune_score[e],
                u8::from(!t.kept[e]),
                t.omega[e]
            );
        }
        for u in 0..graph.n_nodes() {
            let _ = writeln!(
                out,
                "{u},{u},1,{},,0,{}",
                t.importance[nnz + u],
                t.omega[nnz + u]
            );
        }
        out
    }

    /// Writes `guard_layer{k}.csv` for every layer into `dir`.
    pub fn write_csv(&self, graph: &SparseGraph, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for k in 0..self.layers.len() {
            std::fs::write(
                dir.join(format!("guard_layer{k}.csv")),
                self.layer_csv(graph, k),
            )?;
        }
        Ok(())
    }
}
