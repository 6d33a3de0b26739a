use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Masks, SparseGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train,
            val,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::validation(format!(
                "split fractions must be positive, got {f:?}"
            )));
        }
        if f.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::validation(format!(
                "split fractions sum to more than 1: {f:?}"
            )));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.1,
            val: 0.1,
            test: 0.8,
            seed: 0,
        }
    }
}

/// Class-stratified random split. Nodes of each class are shuffled and
/// interleaved by their relative rank within the class, so every prefix of
/// the ordering holds each class in proportion (within rounding); the three
/// masks are consecutive slices of that ordering.
pub fn split(graph: &SparseGraph, spec: &SplitSpec) -> Result<SparseGraph> {
    spec.validate()?;
    let n = graph.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); graph.n_classes()];
    for (u, &y) in graph.labels().iter().enumerate() {
        by_class[y].push(u);
    }
    let mut keyed = Vec::with_capacity(n);
    for (class, nodes) in by_class.iter_mut().enumerate() {
        nodes.shuffle(&mut rng);
        let size = nodes.len() as f64;
        for (rank, &u) in nodes.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / size, class, u));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let n_train = (spec.train * n as f64).round() as usize;
    let n_val = (spec.val * n as f64).round() as usize;
    let n_test = ((spec.test * n as f64).round() as usize).min(n - (n_train + n_val).min(n));
    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    for (i, &(_, _, u)) in keyed.iter().enumerate() {
        if i < n_train {
            train[u] = true;
        } else if i < n_train + n_val {
            val[u] = true;
        } else if i < n_train + n_val + n_test {
            test[u] = true;
        }
    }
    for (class, nodes) in by_class.iter().enumerate() {
        if !nodes.is_empty() && !nodes.iter().any(|&u| train[u]) {
            return Err(Error::validation(format!(
                "class {class} has no training nodes"
            )));
        }
    }
    graph.with_masks(Masks::new(train, val, test)?)
}
