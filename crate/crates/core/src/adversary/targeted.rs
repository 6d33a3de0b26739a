use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::surrogate::{Overlay, Surrogate};
use super::targets::margin;
use super::{AttackConfig, AttackKind, FlipRecord, Perturbation};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::guard::similarity;

/// Nodes whose surrogate label differs from `label`, ordered from least to
/// most feature-similar to `u` (ties by index).
pub(super) fn dissimilar_nodes(
    graph: &SparseGraph,
    surrogate: &Surrogate,
    u: usize,
    label: usize,
) -> Result<Vec<usize>> {
    let x = graph
        .features()
        .ok_or_else(|| Error::Precondition("graph has no node features".into()))?;
    let view = surrogate.label_view();
    let mut scored: Vec<(f64, usize)> = (0..graph.n_nodes())
        .filter(|&v| v != u && view[v] != label)
        .map(|v| Ok((similarity(x.row(u), x.row(v))?, v)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    Ok(scored.into_iter().map(|(_, v)| v).collect())
}

/// Scores every candidate flip `(a, b)` by the surrogate loss at `target`
/// and returns the index of the best one (first on ties) with its score.
fn best_flip(
    surrogate: &Surrogate,
    overlay: &Overlay<'_>,
    candidates: &[(usize, usize)],
    target: usize,
    label: usize,
) -> Option<(usize, f64)> {
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|&(a, b)| surrogate.local_loss(overlay, Some((a, b)), target, label))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

/// Greedy flips incident to `attacker`, scored at `target`, until `budget`
/// flips are taken or no candidate remains. Deletions of same-label
/// neighbors are candidates only when `deletions` is set. With
/// `stop_below = Some(k)`, also stops once the surrogate margin at `target`
/// falls below `-k`.
#[allow(clippy::too_many_arguments)]
pub(super) fn greedy_around(
    graph: &SparseGraph,
    surrogate: &Surrogate,
    overlay: &mut Overlay<'_>,
    pert: &mut Perturbation,
    attacker: usize,
    target: usize,
    pool: &[usize],
    pool_size: usize,
    budget: usize,
    deletions: bool,
    stop_below: Option<f64>,
) {
    let view = surrogate.label_view();
    let label = view[target];
    for _ in 0..budget {
        let mut candidates: Vec<(usize, usize)> = pool
            .iter()
            .copied()
            .filter(|&x| {
                x != attacker
                    && x != target
                    && !overlay.in_base(attacker, x)
                    && !overlay.is_flipped(attacker, x)
            })
            .take(pool_size)
            .map(|x| (attacker, x))
            .collect();
        if deletions {
            candidates.extend(
                graph
                    .neighbors(attacker)
                    .iter()
                    .filter(|&&y| {
                        y != target && view[y] == label && !overlay.is_flipped(attacker, y)
                    })
                    .map(|&y| (attacker, y)),
            );
        }
        let Some((i, score)) = best_flip(surrogate, overlay, &candidates, target, label) else {
            break;
        };
        let (a, b) = candidates[i];
        let insert = !overlay.in_base(a, b);
        if insert {
            pert.insert(a, b);
        } else {
            pert.delete(a, b);
        }
        pert.log.push(FlipRecord {
            u: a.min(b),
            v: a.max(b),
            insert,
            score,
            best_in_batch: score,
        });
        overlay.flip(a, b);
        if let Some(k) = stop_below {
            if margin(&surrogate.local_logits(overlay, None, target), label) < -k {
                break;
            }
        }
    }
}

/// Direct targeted attack: up to `deg(u)` flips of edges incident to `u`.
pub fn attack_direct_with(
    graph: &SparseGraph,
    surrogate: &Surrogate,
    u: usize,
    config: &AttackConfig,
) -> Result<Perturbation> {
    check_target(graph, u)?;
    let budget = graph.degree(u);
    let label = surrogate.label_view()[u];
    let pool = dissimilar_nodes(graph, surrogate, u, label)?;
    let mut pert = Perturbation::new(AttackKind::Direct, budget, config.seed);
    pert.targets = vec![u];
    pert.attackers = vec![u];
    let mut overlay = Overlay::new(graph);
    greedy_around(
        graph,
        surrogate,
        &mut overlay,
        &mut pert,
        u,
        u,
        &pool,
        config.pool_size,
        budget,
        true,
        None,
    );
    Ok(pert)
}

/// Influence attack: perturbs up to `influence_neighbors` neighbors of `u`,
/// each with its own budget `deg(v)`, never touching `u` itself.
pub fn attack_influence_with(
    graph: &SparseGraph,
    surrogate: &Surrogate,
    u: usize,
    config: &AttackConfig,
) -> Result<Perturbation> {
    check_target(graph, u)?;
    let mut neighbors = graph.neighbors(u).to_vec();
    let mut rng =
        ChaCha8Rng::seed_from_u64(config.seed ^ (u as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    neighbors.shuffle(&mut rng);
    neighbors.truncate(config.influence_neighbors);
    neighbors.sort_unstable();

    let label = surrogate.label_view()[u];
    let pool = dissimilar_nodes(graph, surrogate, u, label)?;
    let budget = neighbors.iter().map(|&v| graph.degree(v)).sum();
    let mut pert = Perturbation::new(AttackKind::Influence, budget, config.seed);
    pert.targets = vec![u];
    pert.attackers = neighbors.clone();
    let mut overlay = Overlay::new(graph);
    for &v in &neighbors {
        greedy_around(
            graph,
            surrogate,
            &mut overlay,
            &mut pert,
            v,
            u,
            &pool,
            config.pool_size,
            graph.degree(v),
            true,
            None,
        );
    }
    Ok(pert)
}

fn check_target(graph: &SparseGraph, u: usize) -> Result<()> {
    if u >= graph.n_nodes() {
        return Err(Error::Attack(format!("target {u} is not a node")));
    }
    if graph.degree(u) == 0 {
        return Err(Error::Attack(format!(
            "target {u} is isolated; budget is zero"
        )));
    }
    Ok(())
}
