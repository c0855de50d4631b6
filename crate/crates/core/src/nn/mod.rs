//! Layers and backbone architectures.

pub mod layers;
pub mod model;

pub use layers::{AttentionBlock, Init, Linear, Mlp};
pub use model::{
    embed_categorical, readout_mean, Backbone, Batch, Model, ModelConfig, PeSpec, PreparedGraph,
    Task,
};
