use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gcn,
    Gin,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Gin => "gin",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "gin" => Ok(ModelKind::Gin),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kind: ModelKind,
    pub activation: bool,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::validation(format!(
                "layer dims must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// One message-passing layer.
///
/// * MSG: GCN transforms each node with `W`; GIN forwards the raw embedding.
/// * AGG: weighted sum of messages over the closed neighborhood, with one
///   weight per stored edge and one self weight per node.
/// * UPD: GCN adds a bias; GIN applies a one-hidden-layer MLP whose
///   width is `max(in_dim, out_dim)`. A ReLU follows when the spec asks for
///   an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<Tensor>,
}

fn linear<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> [Tensor; 2] {
    let bound = 1.0 / (fan_in as f64).sqrt();
    [
        Tensor::uniform(vec![fan_in, fan_out], bound, rng).with_grad(),
        Tensor::uniform(vec![1, fan_out], bound, rng).with_grad(),
    ]
}

pub fn make_gcn_layer<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Layer> {
    spec.validate()?;
    Ok(Layer {
        spec: LayerSpec {
            kind: ModelKind::Gcn,
            ..spec
        },
        params: linear(spec.in_dim, spec.out_dim, rng).into(),
    })
}

pub fn make_gin_layer<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Layer> {
    spec.validate()?;
    let width = spec.in_dim.max(spec.out_dim);
    let [w1, b1] = linear(spec.in_dim, width, rng);
    let [w2, b2] = linear(width, spec.out_dim, rng);
    Ok(Layer {
        spec: LayerSpec {
            kind: ModelKind::Gin,
            ..spec
        },
        params: vec![w1, b1, w2, b2],
    })
}

impl Layer {
    pub fn new<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        match spec.kind {
            ModelKind::Gcn => make_gcn_layer(spec, rng),
            ModelKind::Gin => make_gin_layer(spec, rng),
        }
    }

    pub fn message(&self, tape: &mut Tape, h: Var, params: &[Var]) -> Result<Var> {
        match self.spec.kind {
            ModelKind::Gcn => tape.matmul(h, params[0]),
            ModelKind::Gin => Ok(h),
        }
    }

    pub fn aggregate(
        &self,
        tape: &mut Tape,
        graph: &SparseGraph,
        weights: Var,
        messages: Var,
    ) -> Result<Var> {
        tape.weighted_aggregate(graph.pattern().clone(), weights, messages)
    }

    pub fn update(&self, tape: &mut Tape, aggregated: Var, params: &[Var]) -> Result<Var> {
        let out = match self.spec.kind {
            ModelKind::Gcn => tape.add_bias(aggregated, params[1])?,
            ModelKind::Gin => {
                let z = tape.matmul(aggregated, params[0])?;
                let z = tape.add_bias(z, params[1])?;
                let z = tape.relu(z);
                let z = tape.matmul(z, params[2])?;
                tape.add_bias(z, params[3])?
            }
        };
        Ok(if self.spec.activation {
            tape.relu(out)
        } else {
            out
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        graph: &SparseGraph,
        weights: Var,
        h: Var,
        params: &[Var],
    ) -> Result<Var> {
        let m = self.message(tape, h, params)?;
        let agg = self.aggregate(tape, graph, weights, m)?;
        self.update(tape, agg, params)
    }
}

/// Edge and self weights a model uses when no defense is attached, laid out
/// as `[one per stored edge..., one per node...]`.
///
/// GCN: `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree including the self
/// term. GIN: unit edge weights and self weight `1 + eps` with `eps = 0`.
pub fn default_weights(kind: ModelKind, graph: &SparseGraph) -> Vec<f64> {
    let n = graph.n_nodes();
    let nnz = graph.n_directed();
    let mut w = vec![0.0; nnz + n];
    match kind {
        ModelKind::Gcn => {
            let inv_sqrt: Vec<f64> = (0..n)
                .map(|u| 1.0 / ((graph.degree(u) + 1) as f64).sqrt())
                .collect();
            for e in 0..nnz {
                w[e] = inv_sqrt[graph.edge_source(e)] * inv_sqrt[graph.edge_target(e)];
            }
            for u in 0..n {
                w[nnz + u] = inv_sqrt[u] * inv_sqrt[u];
            }
        }
        ModelKind::Gin => w.iter_mut().for_each(|x| *x = 1.0),
    }
    w
}
