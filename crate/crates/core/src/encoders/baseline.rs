//! Static positional encodings: random-walk diagonals and Laplacian eigenvectors.

use super::eigen::symmetric_eigendecomposition;
use crate::error::{Error, Result};
use crate::graph::FeaturedGraph;
use crate::matrix::DenseMatrix;

/// Eigenvalues below this count as trivial (one per connected component).
pub const TRIVIAL_EIGENVALUE: f64 = 1e-8;

/// Row `v` holds `[RW_vv, (RW^2)_vv, ..., (RW^k)_vv]` with `RW = A D^{-1}`.
pub fn rwpe(g: &FeaturedGraph, k: usize) -> Result<DenseMatrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("RWPE needs k >= 1".into()));
    }
    let n = g.num_nodes();
    let rw = g.random_walk_matrix();
    let mut power = rw.clone();
    let mut out = DenseMatrix::zeros(n, k);
    for step in 0..k {
        if step > 0 {
            power = power.matmul(&rw)?;
        }
        for v in 0..n {
            out[(v, step)] = power[(v, v)];
        }
    }
    Ok(out)
}

/// Row `v` holds entry `v` of the first `k` non-trivial eigenvectors of the
/// normalized Laplacian (ascending eigenvalue), zero-padded when the graph
/// has fewer.
pub fn lape(g: &FeaturedGraph, k: usize) -> Result<DenseMatrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("LaPE needs k >= 1".into()));
    }
    let n = g.num_nodes();
    let eig = symmetric_eigendecomposition(&g.normalized_laplacian())?;
    let mut out = DenseMatrix::zeros(n, k);
    let nontrivial = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &lam)| lam >= TRIVIAL_EIGENVALUE)
        .map(|(i, _)| i)
        .take(k);
    for (col, idx) in nontrivial.enumerate() {
        for v in 0..n {
            out[(v, col)] = eig.vectors[(v, idx)];
        }
    }
    Ok(out)
}
