use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{default_weights, Layer, LayerSpec, ModelKind};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::guard::{GuardState, GuardTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden widths; the model has `hidden.len() + 1` layers.
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Gcn,
            hidden: vec![16],
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    layers: Vec<Layer>,
    dropout: f64,
    training: bool,
    guard: Option<GuardState>,
}

pub(crate) struct ForwardOutput {
    pub logits: Var,
    /// Tape variables of [`Model::parameters`], in the same order.
    pub params: Vec<Var>,
    pub trace: Option<GuardTrace>,
    /// Sum of auxiliary defense penalties, if any were recorded.
    pub penalty: Option<Var>,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(
        config: &ModelConfig,
        in_dim: usize,
        n_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![in_dim];
        dims.extend(&config.hidden);
        dims.push(n_classes);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                Layer::new(
                    LayerSpec {
                        in_dim: w[0],
                        out_dim: w[1],
                        kind: config.kind,
                        activation: i < last,
                    },
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, config.dropout)
    }

    pub fn from_layers(layers: Vec<Layer>, dropout: f64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::validation("model needs at least one layer"))?;
        let kind = first.spec.kind;
        for pair in layers.windows(2) {
            if pair[0].spec.out_dim != pair[1].spec.in_dim {
                return Err(Error::validation(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].spec.out_dim, pair[1].spec.in_dim
                )));
            }
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::validation(format!(
                "dropout {dropout} outside [0, 1)"
            )));
        }
        Ok(Self {
            kind,
            layers,
            dropout,
            training: false,
            guard: None,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.out_dim)
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn attach_guard(&mut self, guard: GuardState) {
        self.guard = Some(guard);
    }

    pub fn detach_guard(&mut self) -> Option<GuardState> {
        self.guard.take()
    }

    pub fn guard(&self) -> Option<&GuardState> {
        self.guard.as_ref()
    }

    pub fn guard_mut(&mut self) -> Option<&mut GuardState> {
        self.guard.as_mut()
    }

    /// Layer parameters in layer order, then the guard's `W` and `beta` logit.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.layers.iter().flat_map(|l| l.params.iter()).collect();
        if let Some(g) = &self.guard {
            out.extend(g.parameters());
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut())
            .collect();
        if let Some(g) = &mut self.guard {
            out.extend(g.parameters_mut());
        }
        out
    }

    /// Which entries of [`Model::parameters`] take weight decay: layer
    /// parameters do, guard parameters do not.
    pub fn decay_mask(&self) -> Vec<bool> {
        let layers = self.layers.iter().map(|l| l.params.len()).sum();
        let guard = self.guard.as_ref().map_or(0, |g| g.parameters().len());
        let mut mask = vec![true; layers];
        mask.resize(layers + guard, false);
        mask
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            let local: &[&str] = match layer.spec.kind {
                ModelKind::Gcn => &["weight", "bias"],
                ModelKind::Gin => &["mlp0.weight", "mlp0.bias", "mlp1.weight", "mlp1.bias"],
            };
            names.extend(local.iter().map(|n| format!("layer{k}.{n}")));
        }
        if self.guard.is_some() {
            names.push("guard.prune_weight".into());
            names.push("guard.beta_logit".into());
        }
        names
    }

    /// Evaluation-mode logits with explicit per-layer coefficients (one entry
    /// per stored edge plus one per node), or the model's own normalization
    /// when `edge_weights` is `None`. Any attached guard is bypassed.
    pub fn forward(
        &self,
        graph: &SparseGraph,
        edge_weights: Option<&[Vec<f64>]>,
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let weights = match edge_weights {
            Some(w) => Some(w.to_vec()),
            None => Some(vec![default_weights(self.kind, graph); self.layers.len()]),
        };
        let out = self.forward_impl(&mut tape, graph, weights.as_deref(), None, false)?;
        Ok(tape.value(out.logits).clone())
    }

    /// Evaluation-mode logits through the attached guard if there is one.
    pub fn predict(&self, graph: &SparseGraph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.forward_on_tape(&mut tape, graph, None, None)?;
        Ok(tape.value(out.logits).clone())
    }

    pub(crate) fn forward_on_tape(
        &self,
        tape: &mut Tape,
        graph: &SparseGraph,
        edge_weights: Option<&[Vec<f64>]>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardOutput> {
        self.forward_impl(tape, graph, edge_weights, rng, self.guard.is_some())
    }

    fn forward_impl(
        &self,
        tape: &mut Tape,
        graph: &SparseGraph,
        edge_weights: Option<&[Vec<f64>]>,
        mut rng: Option<&mut ChaCha8Rng>,
        use_guard: bool,
    ) -> Result<ForwardOutput> {
        let features = graph
            .features()
            .ok_or_else(|| Error::Precondition("graph has no node features".into()))?;
        let in_dim = self.layers[0].spec.in_dim;
        if features.cols() != in_dim {
            return Err(Error::shape(
                "forward features",
                &[graph.n_nodes(), in_dim],
                features.shape(),
            ));
        }
        let expected = graph.n_directed() + graph.n_nodes();
        if let Some(w) = edge_weights {
            if w.len() != self.layers.len() {
                return Err(Error::shape(
                    "forward edge weights",
                    &[self.layers.len()],
                    &[w.len()],
                ));
            }
            if let Some(bad) = w.iter().find(|w| w.len() != expected) {
                return Err(Error::shape(
                    "forward edge weights",
                    &[expected],
                    &[bad.len()],
                ));
            }
        }

        let params: Vec<Var> = self
            .parameters()
            .into_iter()
            .map(|p| tape.leaf(p))
            .collect();
        let guard = if use_guard && edge_weights.is_none() {
            self.guard.as_ref()
        } else {
            None
        };
        let (guard_w, beta) = match guard {
            Some(_) => {
                let n = params.len();
                let beta = tape.sigmoid(params[n - 1]);
                (Some(params[n - 2]), Some(beta))
            }
            None => (None, None),
        };

        let mut h = tape.constant(features.clone());
        let mut prev_omega = None;
        let mut trace = GuardTrace::default();
        let mut penalties = Vec::new();
        let mut offset = 0;
        for (k, layer) in self.layers.iter().enumerate() {
            let lp = &params[offset..offset + layer.params.len()];
            offset += layer.params.len();
            let weights = match (edge_weights, guard) {
                (Some(w), _) => tape.constant(Tensor::new(vec![expected], w[k].clone())?),
                (None, Some(g)) => {
                    let (omega, layer_trace) = g.layer_coefficients(
                        tape,
                        graph,
                        k,
                        h,
                        guard_w.expect("guard parameters"),
                        beta.expect("guard parameters"),
                        prev_omega,
                        &mut penalties,
                    )?;
                    trace.layers.push(layer_trace);
                    prev_omega = Some(omega);
                    omega
                }
                (None, None) => {
                    let w = default_weights(self.kind, graph);
                    tape.constant(Tensor::new(vec![expected], w)?)
                }
            };
            let input = match (&mut rng, self.training) {
                (Some(r), true) => tape.dropout(h, self.dropout, *r)?,
                _ => h,
            };
            h = layer.forward(tape, graph, weights, input, lp)?;
        }

        let penalty = match penalties.split_first() {
            None => None,
            Some((first, rest)) => {
                let mut acc = *first;
                for p in rest {
                    acc = tape.add(acc, *p)?;
                }
                Some(acc)
            }
        };
        Ok(ForwardOutput {
            logits: h,
            params,
            trace: guard.map(|_| trace),
            penalty,
        })
    }
}
