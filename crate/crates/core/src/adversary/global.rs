use std::cmp::Ordering;

use rayon::prelude::*;

use super::config::check_rate;
use super::surrogate::{Overlay, Surrogate};
use super::targeted::{dissimilar_nodes, greedy_around};
use super::targets::margin;
use super::{AttackConfig, AttackKind, Perturbation};
use crate::error::{Error, Result};
use crate::graph::{Masks, SparseGraph};

/// Non-targeted attack with `floor(rate * E)` flips. Test nodes are visited
/// in order of increasing surrogate margin, recomputed on the perturbed graph
/// before each visit. Each visited node receives greedy flips incident to it
/// (scored by its surrogate loss, as in the direct attack) until the
/// surrogate margin falls below `-confidence` or `deg(u)` flips are spent.
pub fn attack_nontargeted_with(
    graph: &SparseGraph,
    surrogate: &Surrogate,
    config: &AttackConfig,
) -> Result<Perturbation> {
    check_rate(config.rate)?;
    let masks = graph
        .masks()
        .ok_or_else(|| Error::Precondition("non-targeted attack needs a test mask".into()))?;
    let budget = (config.rate * graph.n_edges() as f64).floor() as usize;
    let view = surrogate.label_view();
    let test = Masks::indices(&masks.test);

    let mut pert = Perturbation::new(AttackKind::NonTargeted, budget, config.seed);
    pert.targets = test.clone();
    pert.attackers = test.clone();
    let mut overlay = Overlay::new(graph);
    let mut visited = vec![false; graph.n_nodes()];

    while pert.len() < budget {
        let next = test
            .par_iter()
            .filter(|&&u| !visited[u] && graph.degree(u) > 0)
            .map(|&u| {
                (
                    margin(&surrogate.local_logits(&overlay, None, u), view[u]),
                    u,
                )
            })
            .filter(|&(m, _)| m >= 0.0)
            .min_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
        let Some((_, u)) = next else {
            break;
        };
        visited[u] = true;
        let pool = dissimilar_nodes(graph, surrogate, u, view[u])?;
        let cap = graph.degree(u).min(budget - pert.len());
        greedy_around(
            graph,
            surrogate,
            &mut overlay,
            &mut pert,
            u,
            u,
            &pool,
            config.pool_size,
            cap,
            config.global_deletions,
            Some(config.confidence),
        );
    }
    Ok(pert)
}
