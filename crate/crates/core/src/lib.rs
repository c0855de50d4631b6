//! Learnable local Euler Characteristic Transform positional encodings for
//! graph neural networks.
//!
//! The crate covers featured graphs, a small reverse-mode autodiff tape,
//! exact and smoothed ECTs, positional encoders (LEAP, RWPE, LaPE), GCN /
//! GAT / NoMP backbones, a cross-validation training harness and dataset
//! readers and writers.

pub mod autodiff;
pub mod data;
pub mod ect;
pub mod encoders;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod nn;
pub mod train;

pub use ect::{DirectionSet, EctMatrix, EctMode, NeighborhoodBatch, ThresholdGrid};
pub use encoders::{LeapConfig, LeapEncoder, ProjectionKind};
pub use error::{Error, Result};
pub use data::{Dataset, Target};
pub use graph::FeaturedGraph;
pub use matrix::DenseMatrix;
pub use nn::{Backbone, Model, ModelConfig, PeSpec, Task};
pub use train::{train_eval, TrainConfig, TrainReport};
