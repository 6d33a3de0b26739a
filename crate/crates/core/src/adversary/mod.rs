//! Budgeted greedy structure poisoning against a GCN surrogate.
//!
//! Targeted attacks score every candidate flip exactly, by recomputing the
//! surrogate's loss at the target from its two-hop neighborhood. The
//! non-targeted attack ranks all admissible flips by the gradient of the
//! surrogate loss with respect to the dense adjacency matrix.

mod config;
mod global;
mod perturbation;
mod surrogate;
mod targeted;
mod targets;

pub use config::AttackConfig;
pub use global::attack_nontargeted_with;
pub use perturbation::{AttackKind, FlipRecord, Perturbation};
pub use surrogate::Surrogate;
pub use targeted::{attack_direct_with, attack_influence_with};
pub use targets::{margin, select_targets, TargetSet};

use crate::error::Result;
use crate::graph::SparseGraph;

pub fn train_surrogate(graph: &SparseGraph, config: &AttackConfig) -> Result<Surrogate> {
    let train = crate::nn::TrainConfig {
        seed: config.seed,
        ..config.surrogate_train
    };
    Surrogate::train(graph, config.surrogate_hidden, &train)
}

/// Trains a surrogate on `graph` and runs a direct attack on `u`.
pub fn attack_direct(graph: &SparseGraph, u: usize, config: &AttackConfig) -> Result<Perturbation> {
    config.validate()?;
    attack_direct_with(graph, &train_surrogate(graph, config)?, u, config)
}

/// Trains a surrogate on `graph` and runs an influence attack on `u`.
pub fn attack_influence(
    graph: &SparseGraph,
    u: usize,
    config: &AttackConfig,
) -> Result<Perturbation> {
    config.validate()?;
    attack_influence_with(graph, &train_surrogate(graph, config)?, u, config)
}

/// Trains a surrogate on `graph` and runs the non-targeted attack.
pub fn attack_nontargeted(graph: &SparseGraph, config: &AttackConfig) -> Result<Perturbation> {
    config.validate()?;
    attack_nontargeted_with(graph, &train_surrogate(graph, config)?, config)
}
