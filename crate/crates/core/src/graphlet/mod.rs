//! Graphlet orbit counting and synthetic graph generators.

mod orbits;
mod synth;

pub use orbits::{count_orbits, GdvTable, N_ORBITS};
pub use synth::{gen_cycle_house, gen_sbm, role, sbm_class_mean, CycleHouseSpec, SbmSpec};

use crate::autodiff::Tensor;
use crate::error::Result;
use crate::graph::SparseGraph;

/// Graphlet degree vectors as an `n x 15` feature matrix: `log(1 + count)`
/// per orbit, then z-scored per column. Constant columns become zero.
pub fn gdv_features(table: &GdvTable) -> Result<Tensor> {
    let n = table.n_nodes();
    let mut data = Vec::with_capacity(n * N_ORBITS);
    for u in 0..n {
        data.extend(table.log_scaled(u)?);
    }
    for j in 0..N_ORBITS {
        let col = || data.iter().skip(j).step_by(N_ORBITS);
        let mean = col().sum::<f64>() / n.max(1) as f64;
        let var = col().map(|x| (x - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
        let sd = var.sqrt();
        for x in data.iter_mut().skip(j).step_by(N_ORBITS) {
            *x = if sd > 1e-12 { (*x - mean) / sd } else { 0.0 };
        }
    }
    Tensor::matrix(n, N_ORBITS, data)
}

/// Attaches standardized graphlet degree vectors of `graph` as its features.
pub fn with_gdv_features(graph: &SparseGraph) -> Result<(SparseGraph, GdvTable)> {
    let table = count_orbits(graph);
    let g = graph.with_features(gdv_features(&table)?)?;
    Ok((g, table))
}
