#![allow(dead_code)]

use leap::{DenseMatrix, FeaturedGraph};
use rand::Rng;

/// Random simple graph with `1..=max_nodes` nodes, features uniform in
/// `[-1, 1]^dim` and each pair joined with probability `p`.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize, dim: usize, p: f64) -> FeaturedGraph {
    let n = rng.random_range(1..=max_nodes);
    random_graph_with(rng, n, dim, p)
}

pub fn random_graph_with(rng: &mut impl Rng, n: usize, dim: usize, p: f64) -> FeaturedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    FeaturedGraph::new(n, &edges, random_matrix(rng, n, dim, 1.0)).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Breadth-first distances from `source`, `usize::MAX` when unreachable.
pub fn bfs_distances(g: &FeaturedGraph, source: usize) -> Vec<usize> {
    let n = g.num_nodes();
    let mut dist = vec![usize::MAX; n];
    dist[source] = 0;
    let mut frontier = vec![source];
    let mut level = 0;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for &u in &frontier {
            for &(a, b) in g.edges() {
                let w = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if dist[w] == usize::MAX {
                    dist[w] = level;
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    dist
}
