use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Masks, SparseGraph};
use crate::nn::Model;

/// Targets split by classification margin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    pub top: Vec<usize>,
    pub random: Vec<usize>,
    pub bottom: Vec<usize>,
}

impl TargetSet {
    pub fn all(&self) -> Vec<usize> {
        [&self.top[..], &self.random, &self.bottom].concat()
    }

    pub fn len(&self) -> usize {
        self.top.len() + self.random.len() + self.bottom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `logit(true) - max other logit`.
pub fn margin(logits: &[f64], label: usize) -> f64 {
    let other = logits
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    logits[label] - other
}

/// Picks `n` correctly classified test nodes: the `n/4` largest margins,
/// the `n/4` smallest, and `n - 2*(n/4)` drawn with `seed` from the rest.
pub fn select_targets(
    graph: &SparseGraph,
    model: &Model,
    n: usize,
    seed: u64,
) -> Result<TargetSet> {
    let masks = graph
        .masks()
        .ok_or_else(|| Error::Precondition("graph has no test mask".into()))?;
    let logits = model.predict(graph)?;
    let labels = graph.labels();
    let mut eligible: Vec<(f64, usize)> = Masks::indices(&masks.test)
        .into_iter()
        .filter(|&u| logits.argmax_row(u) == labels[u])
        .map(|u| (margin(logits.row(u), labels[u]), u))
        .collect();
    if eligible.len() < n {
        return Err(Error::Selection {
            available: eligible.len(),
            required: n,
        });
    }
    eligible.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let edge = n / 4;
    let top: Vec<usize> = eligible[..edge].iter().map(|e| e.1).collect();
    let bottom: Vec<usize> = eligible[eligible.len() - edge..]
        .iter()
        .map(|e| e.1)
        .collect();
    let mut middle: Vec<usize> = eligible[edge..eligible.len() - edge]
        .iter()
        .map(|e| e.1)
        .collect();
    middle.sort_unstable();
    middle.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    middle.truncate(n - 2 * edge);
    Ok(TargetSet {
        top,
        random: middle,
        bottom,
    })
}
