//! Reverse-mode differentiation: the tape, parameter storage and a
//! finite-difference checker used as a test oracle.

mod check;
mod param;
mod tape;

pub use check::{finite_difference_check, finite_difference_check_coords, kink_aware_check_coords, ridders_derivative};
pub use param::{flatten_trainable_grads, Bindings, ParamId, ParamStore, Parameter};
pub use tape::{stable_sigmoid, Tape, Var};
