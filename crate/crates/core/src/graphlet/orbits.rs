use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub const N_ORBITS: usize = 15;

/// Per-node counts of the 15 automorphism orbits of connected graphlets on
/// two to four nodes.
///
/// | graphlet | orbits |
/// |---|---|
/// | edge | 0 |
/// | path on 3 nodes | 1 end, 2 middle |
/// | triangle | 3 |
/// | path on 4 nodes | 4 end, 5 inner |
/// | star | 6 leaf, 7 center |
/// | 4-cycle | 8 |
/// | paw | 9 pendant, 10 triangle (degree 2), 11 hub |
/// | diamond | 12 degree 2, 13 degree 3 |
/// | K4 | 14 |
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GdvTable {
    counts: Vec<[u64; N_ORBITS]>,
}

impl GdvTable {
    pub fn from_counts(counts: Vec<[u64; N_ORBITS]>) -> Self {
        Self { counts }
    }

    pub fn n_nodes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, u: usize) -> Result<&[u64; N_ORBITS]> {
        self.counts
            .get(u)
            .ok_or_else(|| Error::State(format!("no graphlet vector for node {u}")))
    }

    pub fn counts(&self) -> &[[u64; N_ORBITS]] {
        &self.counts
    }

    /// `log(1 + count)` per orbit.
    pub fn log_scaled(&self, u: usize) -> Result<[f64; N_ORBITS]> {
        let c = self.get(u)?;
        Ok(std::array::from_fn(|i| (c[i] as f64).ln_1p()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Orbit of each member of a connected induced subgraph, given its size,
/// edge count and the member's degree inside it.
pub(crate) fn orbit_of(size: usize, edges: usize, degree: usize, max_degree: usize) -> usize {
    match (size, edges) {
        (2, _) => 0,
        (3, 2) => {
            if degree == 1 {
                1
            } else {
                2
            }
        }
        (3, 3) => 3,
        (4, 3) if max_degree == 3 => {
            if degree == 3 {
                7
            } else {
                6
            }
        }
        (4, 3) => {
            if degree == 1 {
                4
            } else {
                5
            }
        }
        (4, 4) if max_degree == 2 => 8,
        (4, 4) => match degree {
            1 => 9,
            2 => 10,
            _ => 11,
        },
        (4, 5) => {
            if degree == 3 {
                13
            } else {
                12
            }
        }
        (4, 6) => 14,
        _ => unreachable!("not a connected graphlet: {size} nodes, {edges} edges"),
    }
}

fn record(graph: &SparseGraph, nodes: &[usize], acc: &mut [[u64; N_ORBITS]]) {
    let k = nodes.len();
    let mut deg = [0usize; 4];
    let mut edges = 0;
    for i in 0..k {
        for j in i + 1..k {
            if graph.has_edge(nodes[i], nodes[j]) {
                deg[i] += 1;
                deg[j] += 1;
                edges += 1;
            }
        }
    }
    let max_degree = deg[..k].iter().copied().max().unwrap_or(0);
    for i in 0..k {
        acc[nodes[i]][orbit_of(k, edges, deg[i], max_degree)] += 1;
    }
}

/// Enumerates every connected induced subgraph on at most four nodes whose
/// smallest node is `root`, each exactly once (ESU enumeration).
fn extend(
    graph: &SparseGraph,
    root: usize,
    sub: &mut Vec<usize>,
    ext: Vec<usize>,
    acc: &mut [[u64; N_ORBITS]],
) {
    if sub.len() >= 2 {
        record(graph, sub, acc);
    }
    if sub.len() == 4 {
        return;
    }
    let mut ext = ext;
    while let Some(w) = ext.pop() {
        let mut next = ext.clone();
        for &x in graph.neighbors(w) {
            if x <= root || sub.contains(&x) || next.contains(&x) || x == w {
                continue;
            }
            // exclusive neighbor: not adjacent to any node already in the subgraph
            if sub.iter().any(|&s| graph.has_edge(s, x)) {
                continue;
            }
            next.push(x);
        }
        sub.push(w);
        extend(graph, root, sub, next, acc);
        sub.pop();
    }
}

/// Exact graphlet degree vectors over orbits 0..15.
pub fn count_orbits(graph: &SparseGraph) -> GdvTable {
    let n = graph.n_nodes();
    let counts = (0..n)
        .into_par_iter()
        .fold(
            || vec![[0u64; N_ORBITS]; n],
            |mut acc, root| {
                let ext: Vec<usize> = graph
                    .neighbors(root)
                    .iter()
                    .copied()
                    .filter(|&w| w > root)
                    .collect();
                let mut sub = vec![root];
                extend(graph, root, &mut sub, ext, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![[0u64; N_ORBITS]; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for i in 0..N_ORBITS {
                        x[i] += y[i];
                    }
                }
                a
            },
        );
    GdvTable { counts }
}
