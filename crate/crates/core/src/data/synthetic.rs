//! Three-node graphs whose label is their edge count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Target};
use crate::error::{Error, Result};
use crate::graph::FeaturedGraph;
use crate::matrix::DenseMatrix;
use crate::nn::Task;

pub const SYNTHETIC_NODES: usize = 3;
pub const SYNTHETIC_DIM: usize = 2;
pub const SYNTHETIC_CLASSES: usize = 4;
const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { count: 40_000, seed: 0 }
    }
}

/// Uniform point of the closed unit disk by rejection from the square.
fn unit_disk(rng: &mut impl Rng) -> [f64; 2] {
    loop {
        let x = rng.random_range(-1.0..=1.0);
        let y = rng.random_range(-1.0..=1.0);
        if x * x + y * y <= 1.0 {
            return [x, y];
        }
    }
}

/// Each graph has three nodes with features uniform on the unit disk. The
/// edge count is uniform over 0..=3 and the edges are a uniform subset of
/// that size; the label is the edge count.
pub fn generate_synthetic(spec: SyntheticSpec) -> Result<Dataset> {
    if spec.count < SYNTHETIC_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "synthetic count must be at least {SYNTHETIC_CLASSES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut graphs = Vec::with_capacity(spec.count);
    let mut targets = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let mut data = Vec::with_capacity(SYNTHETIC_NODES * SYNTHETIC_DIM);
        for _ in 0..SYNTHETIC_NODES {
            data.extend(unit_disk(&mut rng));
        }
        let features = DenseMatrix::from_vec(SYNTHETIC_NODES, SYNTHETIC_DIM, data)?;
        let count = rng.random_range(0..=PAIRS.len());
        let mut pairs = PAIRS;
        pairs.shuffle(&mut rng);
        graphs.push(FeaturedGraph::new(SYNTHETIC_NODES, &pairs[..count], features)?);
        targets.push(Target::Class(count));
    }
    Dataset::new(
        "synthetic",
        graphs,
        targets,
        Task::Classification {
            classes: SYNTHETIC_CLASSES,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_match_edges_and_features_in_disk() {
        let ds = generate_synthetic(SyntheticSpec { count: 500, seed: 1 }).unwrap();
        for (g, t) in ds.graphs.iter().zip(&ds.targets) {
            let Target::Class(c) = t else { panic!() };
            assert_eq!(g.num_edges(), *c);
            if *c == 3 {
                assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
            }
            for v in 0..3 {
                let x = g.feature(v);
                assert!(x[0] * x[0] + x[1] * x[1] <= 1.0);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(SyntheticSpec { count: 50, seed: 9 }).unwrap();
        let b = generate_synthetic(SyntheticSpec { count: 50, seed: 9 }).unwrap();
        assert_eq!(a, b);
        assert!(generate_synthetic(SyntheticSpec { count: 3, seed: 0 }).is_err());
    }
}
