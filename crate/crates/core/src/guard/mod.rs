//! Neighbor importance estimation, edge pruning and layer-wise graph memory.
//!
//! For every layer `k` the defense turns the current node embeddings into
//! one coefficient per stored edge plus one self coefficient per node:
//!
//! 1. `s_uv`: cosine similarity of the endpoint embeddings (or of their
//!    graphlet degree vectors), clamped at zero.
//! 2. `alpha_uv = s_uv / sum_v' s_uv' * N_u / (N_u + 1)` and
//!    `alpha_uu = 1 / (N_u + 1)`, with `N_u` the number of neighbors of `u`
//!    with positive similarity.
//! 3. Pruning: an edge keeps `alpha_uv` when `sigmoid([alpha_uv, alpha_vu] . W) >= P0`
//!    and drops to zero otherwise.
//! 4. Memory: `omega^k = beta * omega^{k-1} + (1 - beta) * alpha_hat^k`, with
//!    `beta` fixed to zero in the first layer.
//!
//! The resulting coefficients replace the model's own normalization.

mod ops;
mod state;
mod trace;

pub use ops::{
    edge_similarities, estimate_importance, estimate_importance_from_embeddings,
    graphlet_similarity, memory_update, prune, similarity, Importance, Pruned,
};
pub use state::{guarded_forward, GuardConfig, GuardState, SimilarityMode};
pub use trace::{GuardTrace, LayerTrace};

#[cfg(test)]
mod tests;
