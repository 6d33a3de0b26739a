//! Message-passing models (GCN, GIN), training and evaluation.

mod checkpoint;
mod layers;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{default_weights, make_gcn_layer, make_gin_layer, Layer, LayerSpec, ModelKind};
pub use model::{Model, ModelConfig};
pub use train::{accuracy, evaluate, train, History, TrainConfig};
