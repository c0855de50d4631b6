//! Optimization, losses, metrics and the cross-validation protocol.

mod harness;
mod loss;
mod metrics;
mod optim;
mod persist;
mod split;

pub use harness::{
    evaluate, train_eval, FoldResult, LossKind, Summary, TrainConfig, TrainOutcome, TrainReport,
};
pub use loss::{cross_entropy, mse};
pub use metrics::{accuracy, auroc, r2};
pub use optim::Adam;
pub use persist::{ParamFile, PARAM_FORMAT, PARAM_VERSION};
pub use split::{kfold_split, validation_split, FoldAssignment};
