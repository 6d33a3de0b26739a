use std::sync::Arc;

use rand::Rng;

use super::ops::{graphlet_similarity, prune};
use super::trace::{GuardTrace, LayerTrace};
use crate::autodiff::{sigmoid, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::graphlet::GdvTable;
use crate::nn::Model;

/// Where edge similarities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SimilarityMode {
    /// Cosine similarity of the current layer's node embeddings.
    FeatureCosine,
    /// Cosine similarity of log-scaled graphlet degree vectors; the same in
    /// every layer.
    Graphlet(Arc<GdvTable>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardConfig {
    pub p0: f64,
    /// When false the pruning indicator is forced to 1.
    pub prune: bool,
    /// When false `beta` is forced to 0 in every layer.
    pub memory: bool,
    /// Weight of the auxiliary `sum sigmoid(c W)` term over pruned edges,
    /// which is the only gradient path into `W`.
    pub prune_penalty: f64,
    pub mode: SimilarityMode,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            p0: 0.5,
            prune: true,
            memory: true,
            prune_penalty: 1e-3,
            mode: SimilarityMode::FeatureCosine,
        }
    }
}

impl GuardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::Config(format!("P0 = {} outside [0, 1]", self.p0)));
        }
        if !self.prune_penalty.is_finite() || self.prune_penalty < 0.0 {
            return Err(Error::Config(format!(
                "negative prune penalty {}",
                self.prune_penalty
            )));
        }
        Ok(())
    }
}

/// Trainable defense parameters: the pruning map `W` (2 -> 1, no bias) and
/// the memory coefficient, stored as an unconstrained logit.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardState {
    pub config: GuardConfig,
    pub prune_weight: Tensor,
    pub beta_logit: Tensor,
}

impl GuardState {
    /// `W` starts with nonnegative entries drawn uniformly from
    /// `[0, 1/sqrt(2)]`, so no edge with nonnegative importance is pruned at
    /// the default threshold before training; `beta` starts at 0.5.
    pub fn new<R: Rng + ?Sized>(config: GuardConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / 2f64.sqrt();
        let w: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..=bound)).collect();
        Ok(Self {
            config,
            prune_weight: Tensor::matrix(2, 1, w)?.with_grad(),
            beta_logit: Tensor::scalar(0.0).with_grad(),
        })
    }

    pub fn w(&self) -> [f64; 2] {
        [self.prune_weight.data()[0], self.prune_weight.data()[1]]
    }

    /// Memory coefficient used in layers `k >= 1`.
    pub fn beta(&self) -> f64 {
        if self.config.memory {
            sigmoid(self.beta_logit.item())
        } else {
            0.0
        }
    }

    pub fn parameters(&self) -> [&Tensor; 2] {
        [&self.prune_weight, &self.beta_logit]
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.prune_weight, &mut self.beta_logit]
    }

    /// Per-edge similarities that do not depend on the embeddings, if any.
    fn static_similarities(&self, graph: &SparseGraph) -> Result<Option<Vec<f64>>> {
        let SimilarityMode::Graphlet(table) = &self.config.mode else {
            return Ok(None);
        };
        if table.n_nodes() != graph.n_nodes() {
            return Err(Error::State(format!(
                "graphlet table covers {} nodes, graph has {}",
                table.n_nodes(),
                graph.n_nodes()
            )));
        }
        (0..graph.n_directed())
            .map(|e| graphlet_similarity(graph.edge_source(e), graph.edge_target(e), table))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Records the coefficient computation for one layer on `tape` and
    /// returns the `omega` variable (length `nnz + n`).
    ///
    /// Gradients reach the embeddings through the similarity and the
    /// normalization. The pruning indicator is a constant in the backward
    /// pass; `W` only receives gradient from the penalty term pushed onto
    /// `penalties`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn layer_coefficients(
        &self,
        tape: &mut Tape,
        graph: &SparseGraph,
        layer: usize,
        h: Var,
        w: Var,
        beta: Var,
        prev: Option<Var>,
        penalties: &mut Vec<Var>,
    ) -> Result<(Var, LayerTrace)> {
        let pattern = graph.pattern().clone();
        let raw = match self.static_similarities(graph)? {
            Some(s) => tape.constant(Tensor::new(vec![s.len()], s)?),
            None => tape.edge_cosine(pattern.clone(), h)?,
        };
        let clamped = tape.relu(raw);
        let alpha = tape.importance(pattern, clamped)?;

        let alpha_values = tape.value(alpha).data().to_vec();
        let pruned = prune(graph, &alpha_values, self.w(), self.config.p0)?;
        let nnz = graph.n_directed();
        let kept: Vec<bool> = if self.config.prune {
            pruned.kept.clone()
        } else {
            vec![true; nnz]
        };
        let alpha_hat = if kept.iter().all(|&k| k) {
            alpha
        } else {
            let mut indicator: Vec<f64> = kept.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
            indicator.extend(std::iter::repeat_n(1.0, graph.n_nodes()));
            tape.mask_mul(alpha, Arc::new(indicator))?
        };

        if self.config.prune && self.config.prune_penalty > 0.0 && kept.iter().any(|&k| !k) {
            let mut c = Vec::with_capacity(2 * nnz);
            for e in 0..nnz {
                c.push(alpha_values[e]);
                c.push(alpha_values[graph.reverse_edge(e)]);
            }
            let c = tape.constant(Tensor::matrix(nnz, 2, c)?);
            let logits = tape.matmul(c, w)?;
            let scores = tape.sigmoid(logits);
            let mask: Vec<f64> = kept.iter().map(|&k| if k { 0.0 } else { 1.0 }).collect();
            let masked = tape.mask_mul(scores, Arc::new(mask))?;
            let total = tape.sum(masked);
            penalties.push(tape.scale(total, self.config.prune_penalty));
        }

        let (omega, beta_value) = match prev {
            Some(prev) if layer > 0 && self.config.memory => {
                let keep = tape.mul(beta, prev)?;
                let neg = tape.scale(beta, -1.0);
                let fresh_share = tape.add_scalar(neg, 1.0);
                let fresh = tape.mul(fresh_share, alpha_hat)?;
                (tape.add(keep, fresh)?, tape.value(beta).item())
            }
            _ => (alpha_hat, 0.0),
        };

        let trace = LayerTrace {
            similarity: tape.value(raw).data().to_vec(),
            importance: alpha_values,
            prune_score: pruned.scores,
            kept,
            pruned_importance: tape.value(alpha_hat).data().to_vec(),
            omega: tape.value(omega).data().to_vec(),
            beta: beta_value,
        };
        Ok((omega, trace))
    }
}

/// Evaluation-mode forward pass of a model with an attached guard, returning
/// the logits and the per-layer defense trace.
pub fn guarded_forward(model: &Model, graph: &SparseGraph) -> Result<(Tensor, GuardTrace)> {
    if model.guard().is_none() {
        return Err(Error::Precondition("model has no guard attached".into()));
    }
    let mut tape = Tape::new();
    let out = model.forward_on_tape(&mut tape, graph, None, None)?;
    let trace = out.trace.expect("guarded model records a trace");
    Ok((tape.value(out.logits).clone(), trace))
}
