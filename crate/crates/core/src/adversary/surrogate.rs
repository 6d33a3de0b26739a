use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::matmul_raw;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::nn::{train, Model, ModelConfig, ModelKind, TrainConfig};

/// A 2-layer GCN trained on the clean graph, used to score candidate flips.
#[derive(Debug, Clone)]
pub struct Surrogate {
    model: Model,
    /// `X W1`, one row per node.
    projected: Vec<Vec<f64>>,
    b1: Vec<f64>,
    /// `W2` as `hidden x classes`, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
    hidden: usize,
    classes: usize,
    /// Training labels where known, surrogate predictions elsewhere.
    label_view: Vec<usize>,
}

impl Surrogate {
    pub fn train(graph: &SparseGraph, hidden: usize, config: &TrainConfig) -> Result<Self> {
        let model_config = ModelConfig {
            kind: ModelKind::Gcn,
            hidden: vec![hidden],
            dropout: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Model::new(
            &model_config,
            graph.feature_dim(),
            graph.n_classes(),
            &mut rng,
        )?;
        train(&mut model, graph, config)?;
        Self::from_model(graph, model)
    }

    /// Wraps an already trained 2-layer GCN without a guard.
    pub fn from_model(graph: &SparseGraph, model: Model) -> Result<Self> {
        let layers = model.layers();
        if model.kind() != ModelKind::Gcn || layers.len() != 2 || model.guard().is_some() {
            return Err(Error::Precondition(
                "surrogate must be an unguarded 2-layer GCN".into(),
            ));
        }
        let features = graph
            .features()
            .ok_or_else(|| Error::Precondition("graph has no node features".into()))?;
        let (hidden, classes) = (layers[0].spec.out_dim, layers[1].spec.out_dim);
        let w1 = &layers[0].params[0];
        let flat = matmul_raw(
            features.data(),
            w1.data(),
            graph.n_nodes(),
            features.cols(),
            hidden,
        );
        let projected = flat.chunks(hidden).map(<[f64]>::to_vec).collect();
        let logits = model.predict(graph)?;
        let masks = graph.masks();
        let label_view = (0..graph.n_nodes())
            .map(|u| match masks {
                Some(m) if m.train[u] => graph.labels()[u],
                _ => logits.argmax_row(u),
            })
            .collect();
        Ok(Self {
            projected,
            b1: layers[0].params[1].data().to_vec(),
            w2: layers[1].params[0].data().to_vec(),
            b2: layers[1].params[1].data().to_vec(),
            hidden,
            classes,
            label_view,
            model,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn label_view(&self) -> &[usize] {
        &self.label_view
    }

    /// Cross-entropy of the surrogate's prediction at `u` against `label`
    /// on the graph `view`.
    pub(crate) fn local_loss(
        &self,
        view: &Overlay<'_>,
        extra: Option<(usize, usize)>,
        u: usize,
        label: usize,
    ) -> f64 {
        cross_entropy(&self.local_logits(view, extra, u), label)
    }

    /// Surrogate logits at `u` on the graph `view`, computed only from `u`'s
    /// two-hop neighborhood.
    pub(crate) fn local_logits(
        &self,
        view: &Overlay<'_>,
        extra: Option<(usize, usize)>,
        u: usize,
    ) -> Vec<f64> {
        let mut nu = Vec::new();
        let mut nw = Vec::new();
        view.closed_neighbors(u, extra, &mut nu);
        let ru = view.inv_sqrt_degree(u, extra);
        let mut z = self.b2.clone();
        let mut h = vec![0.0; self.hidden];
        for &w in &nu {
            let rw = view.inv_sqrt_degree(w, extra);
            view.closed_neighbors(w, extra, &mut nw);
            h.copy_from_slice(&self.b1);
            for &x in &nw {
                let c = rw * view.inv_sqrt_degree(x, extra);
                for (hj, pj) in h.iter_mut().zip(&self.projected[x]) {
                    *hj += c * pj;
                }
            }
            let c = ru * rw;
            for (j, hj) in h.iter().enumerate() {
                if *hj > 0.0 {
                    let row = &self.w2[j * self.classes..(j + 1) * self.classes];
                    for (zk, wk) in z.iter_mut().zip(row) {
                        *zk += c * hj * wk;
                    }
                }
            }
        }
        z
    }
}

pub(crate) fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// A graph plus pending undirected flips, with one optional tentative flip
/// supplied at query time.
#[derive(Debug, Clone)]
pub(crate) struct Overlay<'a> {
    base: &'a SparseGraph,
    flipped: HashSet<(usize, usize)>,
    added: HashMap<usize, Vec<usize>>,
    degree_delta: HashMap<usize, isize>,
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

impl<'a> Overlay<'a> {
    pub fn new(base: &'a SparseGraph) -> Self {
        Self {
            base,
            flipped: HashSet::new(),
            added: HashMap::new(),
            degree_delta: HashMap::new(),
        }
    }

    pub fn is_flipped(&self, u: usize, v: usize) -> bool {
        self.flipped.contains(&key(u, v))
    }

    /// Whether `(u, v)` is an edge of the base graph.
    pub fn in_base(&self, u: usize, v: usize) -> bool {
        self.base.has_edge(u, v)
    }

    pub fn flip(&mut self, u: usize, v: usize) {
        let insert = !self.base.has_edge(u, v);
        self.flipped.insert(key(u, v));
        let d = if insert { 1 } else { -1 };
        *self.degree_delta.entry(u).or_default() += d;
        *self.degree_delta.entry(v).or_default() += d;
        if insert {
            self.added.entry(u).or_default().push(v);
            self.added.entry(v).or_default().push(u);
        }
    }

    fn degree(&self, w: usize, extra: Option<(usize, usize)>) -> usize {
        let mut d = self.base.degree(w) as isize + self.degree_delta.get(&w).copied().unwrap_or(0);
        if let Some((a, b)) = extra {
            if w == a || w == b {
                d += if self.base.has_edge(a, b) { -1 } else { 1 };
            }
        }
        d as usize
    }

    pub fn inv_sqrt_degree(&self, w: usize, extra: Option<(usize, usize)>) -> f64 {
        1.0 / ((self.degree(w, extra) + 1) as f64).sqrt()
    }

    /// Writes `w` and its current neighbors into `out`.
    pub fn closed_neighbors(&self, w: usize, extra: Option<(usize, usize)>, out: &mut Vec<usize>) {
        out.clear();
        out.push(w);
        let removed = |x: usize| -> bool {
            self.flipped.contains(&key(w, x)) || extra.is_some_and(|(a, b)| key(a, b) == key(w, x))
        };
        out.extend(
            self.base
                .neighbors(w)
                .iter()
                .copied()
                .filter(|&x| !removed(x)),
        );
        if let Some(added) = self.added.get(&w) {
            out.extend(added.iter().copied());
        }
        if let Some((a, b)) = extra {
            if !self.base.has_edge(a, b) {
                if w == a {
                    out.push(b);
                } else if w == b {
                    out.push(a);
                }
            }
        }
    }
}
