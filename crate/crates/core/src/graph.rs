//! Featured graphs: undirected simple graphs whose nodes carry real feature
//! vectors of a shared dimension.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Norms at or below this are treated as zero when normalizing.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturedGraph {
    num_nodes: usize,
    /// Canonical edges: `u < v`, sorted, no duplicates.
    edges: Vec<(usize, usize)>,
    features: DenseMatrix,
}

impl FeaturedGraph {
    /// Validates and canonicalizes a graph. Edges may be given in either
    /// orientation and may repeat; the result keeps one `(min, max)` pair each.
    pub fn new(num_nodes: usize, edges: &[(usize, usize)], features: DenseMatrix) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Empty("graph has no nodes"));
        }
        if features.rows() != num_nodes {
            return Err(Error::DimensionMismatch {
                expected: num_nodes,
                got: features.rows(),
                context: "feature rows vs node count",
            });
        }
        if features.cols() == 0 {
            return Err(Error::Empty("feature dimension is zero"));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            for index in [a, b] {
                if index >= num_nodes {
                    return Err(Error::NodeOutOfRange { index, num_nodes });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            num_nodes,
            edges: set.into_iter().collect(),
            features,
        })
    }

    /// Convenience constructor from per-node feature vectors.
    pub fn from_feature_rows(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: &[Vec<f64>],
    ) -> Result<Self> {
        if features.len() != num_nodes {
            return Err(Error::DimensionMismatch {
                expected: num_nodes,
                got: features.len(),
                context: "feature vectors vs node count",
            });
        }
        Self::new(num_nodes, edges, DenseMatrix::from_rows(features)?)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn feature(&self, v: usize) -> &[f64] {
        self.features.row(v)
    }

    /// Same structure, replaced features.
    pub fn with_features(&self, features: DenseMatrix) -> Result<Self> {
        Self::new(self.num_nodes, &self.edges, features)
    }

    /// Sorted neighbor lists.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Nodes within BFS distance `hops` of `v`, ascending.
    pub fn m_hop_nodes(&self, v: usize, hops: usize) -> Result<Vec<usize>> {
        self.check_node(v)?;
        Ok(m_hop_nodes_with(&self.adjacency_lists(), v, hops))
    }

    /// The induced subgraph on the `hops`-hop ball around `v`, nodes in
    /// ascending original order.
    pub fn m_hop_neighborhood(&self, v: usize, hops: usize) -> Result<FeaturedGraph> {
        let nodes = self.m_hop_nodes(v, hops)?;
        self.induced_subgraph(&nodes)
    }

    /// Induced subgraph on `nodes` (must be sorted and distinct).
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<FeaturedGraph> {
        let mut local = vec![usize::MAX; self.num_nodes];
        for (i, &n) in nodes.iter().enumerate() {
            self.check_node(n)?;
            local[n] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|(u, v)| local[*u] != usize::MAX && local[*v] != usize::MAX)
            .map(|&(u, v)| (local[u], local[v]))
            .collect();
        let rows: Vec<Vec<f64>> = nodes.iter().map(|&n| self.feature(n).to_vec()).collect();
        FeaturedGraph::from_feature_rows(nodes.len(), &edges, &rows)
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<FeaturedGraph> {
        if perm.len() != self.num_nodes {
            return Err(Error::DimensionMismatch {
                expected: self.num_nodes,
                got: perm.len(),
                context: "permutation length",
            });
        }
        let mut features = DenseMatrix::zeros(self.num_nodes, self.feature_dim());
        for (i, &p) in perm.iter().enumerate() {
            self.check_node(p)?;
            features.row_mut(p).copy_from_slice(self.feature(i));
        }
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        FeaturedGraph::new(self.num_nodes, &edges, features)
    }

    pub fn adjacency(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    pub fn degree(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for (i, deg) in self.degrees().into_iter().enumerate() {
            d[(i, i)] = deg as f64;
        }
        d
    }

    /// `I - D^{-1/2} A D^{-1/2}`; isolated nodes get a zero row and column.
    pub fn normalized_laplacian(&self) -> DenseMatrix {
        let inv_sqrt: Vec<f64> = self
            .degrees()
            .into_iter()
            .map(|d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
            .collect();
        let mut l = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for (i, &s) in inv_sqrt.iter().enumerate() {
            if s > 0.0 {
                l[(i, i)] = 1.0;
            }
        }
        for &(u, v) in &self.edges {
            let w = -inv_sqrt[u] * inv_sqrt[v];
            l[(u, v)] = w;
            l[(v, u)] = w;
        }
        l
    }

    /// `A D^{-1}`: column `u` holds `A[., u] / deg(u)`, zero for isolated `u`.
    pub fn random_walk_matrix(&self) -> DenseMatrix {
        let deg = self.degrees();
        let mut rw = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for &(u, v) in &self.edges {
            rw[(u, v)] = 1.0 / deg[v] as f64;
            rw[(v, u)] = 1.0 / deg[u] as f64;
        }
        rw
    }

    fn check_node(&self, index: usize) -> Result<()> {
        if index >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                index,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }
}

pub(crate) fn m_hop_nodes_with(adj: &[Vec<usize>], v: usize, hops: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[v] = 0;
    let mut queue = VecDeque::from([v]);
    let mut found = vec![v];
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                found.push(w);
                queue.push_back(w);
            }
        }
    }
    found.sort_unstable();
    found
}

/// Mean-centers the rows and divides by the largest centered norm. When all
/// rows coincide the result is all zeros.
pub fn normalize_features(features: &DenseMatrix) -> Result<DenseMatrix> {
    let (n, d) = features.shape();
    if n == 0 {
        return Err(Error::Empty("normalize_features needs at least one vector"));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, x) in mean.iter_mut().zip(features.row(r)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut out = features.clone();
    let mut max_norm = 0.0f64;
    for r in 0..n {
        let row = out.row_mut(r);
        for (x, m) in row.iter_mut().zip(&mean) {
            *x -= m;
        }
        max_norm = max_norm.max(row.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    if max_norm <= NORM_EPS {
        return Ok(DenseMatrix::zeros(n, d));
    }
    for x in out.as_mut_slice() {
        *x /= max_norm;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> FeaturedGraph {
        FeaturedGraph::from_feature_rows(3, &[(0, 1), (1, 2)], &[vec![0.0], vec![1.0], vec![2.0]])
            .unwrap()
    }

    fn triangle() -> FeaturedGraph {
        FeaturedGraph::from_feature_rows(
            3,
            &[(0, 1), (1, 2), (0, 2)],
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn build_minimal_and_dedup() {
        let g = FeaturedGraph::from_feature_rows(2, &[(0, 1)], &[vec![0.0, 0.0], vec![1.0, 0.0]])
            .unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (2, 1));

        let g = FeaturedGraph::from_feature_rows(3, &[(0, 1), (1, 0)], &vec![vec![0.0]; 3]).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);

        let g = FeaturedGraph::from_feature_rows(1, &[], &[vec![0.5]]).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (1, 0));
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            FeaturedGraph::from_feature_rows(2, &[(0, 2)], &vec![vec![0.0]; 2]),
            Err(Error::NodeOutOfRange { index: 2, .. })
        ));
        assert!(matches!(
            FeaturedGraph::from_feature_rows(2, &[(1, 1)], &vec![vec![0.0]; 2]),
            Err(Error::SelfLoop(1))
        ));
        assert!(FeaturedGraph::from_feature_rows(2, &[], &[vec![0.0]]).is_err());
        assert!(FeaturedGraph::from_feature_rows(2, &[], &[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn hop_neighborhoods_on_path() {
        let g = path3();
        let n1 = g.m_hop_neighborhood(0, 1).unwrap();
        assert_eq!(n1.num_nodes(), 2);
        assert_eq!(n1.edges(), &[(0, 1)]);
        let n2 = g.m_hop_neighborhood(0, 2).unwrap();
        assert_eq!(n2, g);
        assert!(g.m_hop_neighborhood(3, 1).is_err());
    }

    #[test]
    fn hop_neighborhood_is_induced() {
        let n = triangle().m_hop_neighborhood(0, 1).unwrap();
        assert_eq!(n.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn normalize_examples() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(normalize_features(&x).unwrap().to_rows(), vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);

        let x = DenseMatrix::from_rows(&[vec![5.0, 5.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(normalize_features(&x).unwrap().to_rows(), vec![vec![0.0, 0.0]; 2]);

        // Direct arithmetic: mean (1/3, 2/3); centered rows
        // (-1/3,-2/3), (2/3,-2/3), (-1/3,4/3); largest norm sqrt(17)/3.
        let x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let y = normalize_features(&x).unwrap();
        let s = 17f64.sqrt() / 3.0;
        let expected = [[-1.0 / 3.0, -2.0 / 3.0], [2.0 / 3.0, -2.0 / 3.0], [-1.0 / 3.0, 4.0 / 3.0]];
        for (r, row) in expected.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((y[(r, c)] - v / s).abs() < 1e-12);
            }
        }

        assert!(normalize_features(&DenseMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn k2_laplacian_and_random_walk() {
        let g = FeaturedGraph::from_feature_rows(2, &[(0, 1)], &vec![vec![0.0]; 2]).unwrap();
        assert_eq!(g.normalized_laplacian().to_rows(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let rw = triangle().random_walk_matrix();
        for i in 0..3 {
            assert_eq!(rw[(i, i)], 0.0);
        }
    }

    #[test]
    fn isolated_node_conventions() {
        let g = FeaturedGraph::from_feature_rows(3, &[(0, 1)], &vec![vec![0.0]; 3]).unwrap();
        let l = g.normalized_laplacian();
        assert_eq!(l.row(2), &[0.0, 0.0, 0.0]);
        let rw = g.random_walk_matrix();
        for r in 0..3 {
            assert_eq!(rw[(r, 2)], 0.0);
        }
        assert_eq!(g.adjacency().max_asymmetry(), 0.0);
        assert_eq!(g.degree()[(0, 0)], 1.0);
    }

    #[test]
    fn permutation_relabels_edges() {
        let g = path3();
        let p = g.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(p.feature(2), &[0.0]);
    }
}
