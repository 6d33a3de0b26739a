//! Guarded graph neural networks, graph poisoning attackers and graphlet
//! tooling for node classification under structure perturbations.

pub mod adversary;
pub mod autodiff;
pub mod bench;
pub mod error;
pub mod graph;
pub mod graphlet;
pub mod guard;
pub mod nn;

pub use error::{Error, Result};
