//! Shared inputs for the benchmarks.

use leap::data::{generate_synthetic, SyntheticSpec};
use leap::Dataset;

/// A small slice of the synthetic edge-count task.
pub fn synthetic(count: usize) -> Dataset {
    generate_synthetic(SyntheticSpec { count, seed: 11 }).expect("valid synthetic spec")
}
