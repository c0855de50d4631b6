//! Positional encoders: the learnable LEAP encoder and the static RWPE and
//! LaPE baselines.

pub mod baseline;
pub mod eigen;
pub mod leap;

pub use baseline::{lape, rwpe};
pub use eigen::{symmetric_eigendecomposition, SymmetricEigen};
pub use leap::{LeapConfig, LeapEncoder, Projection, ProjectionKind};
