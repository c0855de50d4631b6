//! Euler Characteristic Transforms of featured graphs.
//!
//! For a direction `θ` and threshold `t`, the sublevel subgraph keeps every
//! vertex with `<θ, x(v)> <= t` and every edge whose larger endpoint
//! projection is `<= t`; its Euler characteristic is vertices minus edges.
//! The exact transform evaluates that count on a grid of directions and
//! thresholds. The smoothed transform swaps each indicator for
//! `sigmoid(λ (t - projection))`, which makes it differentiable in both the
//! directions and the node features.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{m_hop_nodes_with, normalize_features, FeaturedGraph, NORM_EPS};
use crate::matrix::DenseMatrix;

pub const DEFAULT_DIRECTIONS: usize = 16;
pub const DEFAULT_THRESHOLDS: usize = 16;
pub const DEFAULT_SHARPNESS: f64 = 16.0;
/// Normalized features lie in the unit ball; the grid covers [-1, 1] with a
/// 10% margin on each side.
pub const DEFAULT_THRESHOLD_RANGE: (f64, f64) = (-1.1, 1.1);

/// Unit vectors on the sphere, one per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    vectors: DenseMatrix,
    pub trainable: bool,
}

impl DirectionSet {
    /// Wraps the given rows, rescaling each to unit length. Zero rows are
    /// rejected.
    pub fn from_rows(rows: &[Vec<f64>], trainable: bool) -> Result<Self> {
        let mut vectors = DenseMatrix::from_rows(rows)?;
        if vectors.rows() == 0 || vectors.cols() == 0 {
            return Err(Error::Empty("direction set"));
        }
        for r in 0..vectors.rows() {
            let row = vectors.row_mut(r);
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n <= NORM_EPS {
                return Err(Error::InvalidArgument(format!("direction {r} has zero norm")));
            }
            row.iter_mut().for_each(|x| *x /= n);
        }
        Ok(Self { vectors, trainable })
    }

    pub fn from_matrix(vectors: DenseMatrix, trainable: bool) -> Result<Self> {
        Self::from_rows(&vectors.to_rows(), trainable)
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.vectors
    }

    /// Reorders directions: new direction `i` is old direction `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| self.vector(i).to_vec()).collect();
        Self {
            vectors: DenseMatrix::from_rows(&rows).expect("rows"),
            trainable: self.trainable,
        }
    }
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > NORM_EPS {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `n` independent uniform directions on the unit sphere in `d` dimensions,
/// drawn as normalized standard Gaussian vectors.
pub fn sample_directions(d: usize, n: usize, seed: u64) -> Result<DirectionSet> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need d >= 1 and n >= 1 directions, got d={d}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| random_unit(&mut rng, d)).collect();
    DirectionSet::from_rows(&rows, false)
}

/// Projects every row of `vectors` back onto the unit sphere in place. Rows
/// with (near) zero norm are replaced by a random unit vector drawn from `seed`.
pub fn renormalize_directions(vectors: &mut DenseMatrix, seed: u64) {
    let d = vectors.cols();
    let mut rng: Option<ChaCha8Rng> = None;
    for r in 0..vectors.rows() {
        let row = vectors.row_mut(r);
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > NORM_EPS {
            row.iter_mut().for_each(|x| *x /= n);
        } else {
            let rng = rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed));
            row.copy_from_slice(&random_unit(rng, d));
        }
    }
}

/// Strictly increasing threshold values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("threshold grid"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "thresholds must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `count >= 2` evenly spaced points from `lo` to `hi` inclusive.
    pub fn uniform(count: usize, lo: f64, hi: f64) -> Result<Self> {
        if count < 2 || lo >= hi {
            return Err(Error::InvalidArgument(format!(
                "uniform grid needs count >= 2 and lo < hi (count={count}, lo={lo}, hi={hi})"
            )));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
        values[count - 1] = hi;
        Self::new(values)
    }

    /// `count` points on the default range.
    pub fn default_with(count: usize) -> Result<Self> {
        let (lo, hi) = DEFAULT_THRESHOLD_RANGE;
        Self::uniform(count, lo, hi)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shared(&self) -> Rc<[f64]> {
        Rc::from(self.values.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EctMode {
    Exact,
    Smoothed { sharpness: f64 },
}

/// ECT sampled on a direction x threshold grid; row `i` is the Euler
/// characteristic curve along direction `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EctMatrix {
    pub values: DenseMatrix,
    pub mode: EctMode,
}

impl EctMatrix {
    pub fn directions(&self) -> usize {
        self.values.rows()
    }

    pub fn thresholds(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, direction: usize, threshold: usize) -> f64 {
        self.values[(direction, threshold)]
    }

    pub fn row(&self, direction: usize) -> &[f64] {
        self.values.row(direction)
    }

    /// Integer entries of an exact transform.
    pub fn to_integers(&self) -> Vec<Vec<i64>> {
        self.values
            .to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.round() as i64).collect())
            .collect()
    }

    /// Row-major (direction-major) flattening.
    pub fn flatten(&self) -> &[f64] {
        self.values.as_slice()
    }
}

fn check_dims(g: &FeaturedGraph, dirs: &DirectionSet) -> Result<()> {
    if g.feature_dim() != dirs.dim() {
        return Err(Error::DimensionMismatch {
            expected: dirs.dim(),
            got: g.feature_dim(),
            context: "feature dimension vs direction dimension",
        });
    }
    Ok(())
}

fn check_sharpness(sharpness: f64) -> Result<()> {
    if !(sharpness > 0.0 && sharpness.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sharpness must be positive and finite, got {sharpness}"
        )));
    }
    Ok(())
}

/// Projections `<θ_i, x(v)>` as a `|V| x |Θ|` matrix.
fn projections(g: &FeaturedGraph, dirs: &DirectionSet) -> DenseMatrix {
    g.features()
        .matmul(&dirs.as_matrix().transpose())
        .expect("dimensions checked")
}

/// Exact transform: integer counts of sublevel vertices minus sublevel edges.
pub fn exact_ect(g: &FeaturedGraph, dirs: &DirectionSet, thresholds: &ThresholdGrid) -> Result<EctMatrix> {
    check_dims(g, dirs)?;
    let p = projections(g, dirs);
    let mut out = DenseMatrix::zeros(dirs.len(), thresholds.len());
    for i in 0..dirs.len() {
        let vertex: Vec<f64> = (0..g.num_nodes()).map(|v| p[(v, i)]).collect();
        let edge: Vec<f64> = g.edges().iter().map(|&(u, v)| p[(u, i)].max(p[(v, i)])).collect();
        for (j, &t) in thresholds.values().iter().enumerate() {
            let nv = vertex.iter().filter(|&&x| x <= t).count() as i64;
            let ne = edge.iter().filter(|&&x| x <= t).count() as i64;
            out[(i, j)] = (nv - ne) as f64;
        }
    }
    Ok(EctMatrix {
        values: out,
        mode: EctMode::Exact,
    })
}

/// Smoothed transform of a whole graph evaluated without recording gradients.
pub fn smooth_ect(
    g: &FeaturedGraph,
    dirs: &DirectionSet,
    thresholds: &ThresholdGrid,
    sharpness: f64,
) -> Result<EctMatrix> {
    check_dims(g, dirs)?;
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let d = tape.constant(dirs.as_matrix().clone());
    let out = smooth_ect_on_tape(&mut tape, x, g.edges(), d, &thresholds.shared(), sharpness)?;
    Ok(EctMatrix {
        values: tape.value(out).clone(),
        mode: EctMode::Smoothed { sharpness },
    })
}

/// Smoothed transform of one graph recorded on `tape`. `features` is
/// `|V| x d`, `directions` is `|Θ| x d`; the result is `|Θ| x |T|`.
pub fn smooth_ect_on_tape(
    tape: &mut Tape,
    features: Var,
    edges: &[(usize, usize)],
    directions: Var,
    thresholds: &Rc<[f64]>,
    sharpness: f64,
) -> Result<Var> {
    check_sharpness(sharpness)?;
    let (n, d) = tape.shape(features);
    let (a, dd) = tape.shape(directions);
    if d != dd {
        return Err(Error::DimensionMismatch {
            expected: dd,
            got: d,
            context: "feature dimension vs direction dimension",
        });
    }
    let dt = tape.transpose(directions);
    let p = tape.matmul(features, dt)?;
    let seg: Rc<[usize]> = Rc::from(vec![0; n]);
    let counts = sublevel_counts(tape, p, &seg, edges, 1, thresholds, sharpness)?;
    tape.reshape(counts, a, thresholds.len())
}

/// `soft vertex count - soft edge count` per segment, from projections `p`
/// (rows x |Θ|). Edge endpoints index rows of `p`; an edge belongs to the
/// segment of its first endpoint.
///
/// An edge enters the sublevel set together with its higher endpoint, so
/// its sigmoid equals that endpoint's. Each vertex is therefore counted
/// with weight `1 - k`, where `k` is the number of edges it tops in that
/// direction. The value is unchanged, and a vertex whose weight is zero has
/// no influence on the result, not even through rounding.
fn sublevel_counts(
    tape: &mut Tape,
    p: Var,
    seg: &Rc<[usize]>,
    edges: &[(usize, usize)],
    segments: usize,
    thresholds: &Rc<[f64]>,
    sharpness: f64,
) -> Result<Var> {
    if edges.is_empty() {
        return tape.soft_step_count(p, seg.clone(), segments, thresholds.clone(), sharpness);
    }
    let values = tape.value(p);
    let a = values.cols();
    let mut weights = vec![1.0; values.len()];
    for &(u, v) in edges {
        for i in 0..a {
            let (pu, pv) = (values[(u, i)], values[(v, i)]);
            let top = if pu >= pv { u } else { v };
            weights[top * a + i] -= 1.0;
        }
    }
    tape.weighted_soft_step_count(p, seg.clone(), weights.into(), segments, thresholds.clone(), sharpness)
}

/// Local transform of node `v`: the ECT of its normalized `hops`-hop induced
/// subgraph.
pub fn local_ect(
    g: &FeaturedGraph,
    v: usize,
    hops: usize,
    dirs: &DirectionSet,
    thresholds: &ThresholdGrid,
    mode: EctMode,
) -> Result<EctMatrix> {
    if hops == 0 {
        return Err(Error::InvalidArgument("hop count must be at least 1".into()));
    }
    check_dims(g, dirs)?;
    let sub = g.m_hop_neighborhood(v, hops)?;
    let sub = sub.with_features(normalize_features(sub.features())?)?;
    match mode {
        EctMode::Exact => exact_ect(&sub, dirs, thresholds),
        EctMode::Smoothed { sharpness } => smooth_ect(&sub, dirs, thresholds, sharpness),
    }
}

/// Index structure for evaluating many local transforms at once: the
/// neighborhoods of all centers are stacked row-wise.
#[derive(Debug, Clone)]
pub struct NeighborhoodBatch {
    /// Stacked row -> node index in the feature matrix.
    pub members: Rc<[usize]>,
    /// Stacked row -> center id.
    pub member_center: Rc<[usize]>,
    /// Induced edges as pairs of stacked rows.
    pub edges: Vec<(usize, usize)>,
    /// Neighborhood size per center.
    pub sizes: Vec<usize>,
}

impl NeighborhoodBatch {
    /// Every node of `g` is a center.
    pub fn for_graph(g: &FeaturedGraph, hops: usize) -> Result<Self> {
        if hops == 0 {
            return Err(Error::InvalidArgument("hop count must be at least 1".into()));
        }
        let adj = g.adjacency_lists();
        let mut members = Vec::new();
        let mut member_center = Vec::new();
        let mut edges = Vec::new();
        let mut sizes = Vec::with_capacity(g.num_nodes());
        let mut local = vec![usize::MAX; g.num_nodes()];
        for v in 0..g.num_nodes() {
            let nodes = m_hop_nodes_with(&adj, v, hops);
            let base = members.len();
            for (i, &n) in nodes.iter().enumerate() {
                local[n] = base + i;
                members.push(n);
                member_center.push(v);
            }
            for &(a, b) in g.edges() {
                if local[a] != usize::MAX && local[b] != usize::MAX {
                    edges.push((local[a], local[b]));
                }
            }
            for &n in &nodes {
                local[n] = usize::MAX;
            }
            sizes.push(nodes.len());
        }
        Ok(Self {
            members: members.into(),
            member_center: member_center.into(),
            edges,
            sizes,
        })
    }

    pub fn centers(&self) -> usize {
        self.sizes.len()
    }

    pub fn rows(&self) -> usize {
        self.members.len()
    }

    /// Disjoint union; `node_offsets[i]` is added to member indices of part `i`.
    pub fn concat(parts: &[&NeighborhoodBatch], node_offsets: &[usize]) -> Self {
        let mut members = Vec::new();
        let mut member_center = Vec::new();
        let mut edges = Vec::new();
        let mut sizes = Vec::new();
        for (part, &off) in parts.iter().zip(node_offsets) {
            let row_off = members.len();
            let center_off = sizes.len();
            members.extend(part.members.iter().map(|m| m + off));
            member_center.extend(part.member_center.iter().map(|c| c + center_off));
            edges.extend(part.edges.iter().map(|&(a, b)| (a + row_off, b + row_off)));
            sizes.extend_from_slice(&part.sizes);
        }
        Self {
            members: members.into(),
            member_center: member_center.into(),
            edges,
            sizes,
        }
    }
}

/// Mean-centers each segment of `x` and divides by the segment's largest
/// row norm (zero output for degenerate segments).
pub fn normalize_segments_on_tape(
    tape: &mut Tape,
    x: Var,
    seg: &Rc<[usize]>,
    sizes: &[usize],
) -> Result<Var> {
    let segments = sizes.len();
    let sums = tape.segment_sum(x, seg.clone(), segments)?;
    let inv_sizes = DenseMatrix::from_vec(
        segments,
        1,
        sizes.iter().map(|&s| 1.0 / s.max(1) as f64).collect(),
    )?;
    let inv_sizes = tape.constant(inv_sizes);
    let means = tape.mul_col(sums, inv_sizes)?;
    let spread = tape.gather_rows(means, seg.clone())?;
    let centered = tape.sub(x, spread)?;
    let norms = tape.row_norm(centered);
    let max_norm = tape.segment_max(norms, seg, segments)?;
    let inv = tape.safe_recip(max_norm, NORM_EPS);
    let inv_rows = tape.gather_rows(inv, seg.clone())?;
    tape.mul_col(centered, inv_rows)
}

/// Smoothed local transforms of every center in `batch`, recorded on the
/// tape. Returns `centers x (|Θ| * |T|)`, each row a direction-major
/// flattened transform.
pub fn local_smooth_ect_on_tape(
    tape: &mut Tape,
    features: Var,
    batch: &NeighborhoodBatch,
    directions: Var,
    thresholds: &Rc<[f64]>,
    sharpness: f64,
) -> Result<Var> {
    check_sharpness(sharpness)?;
    let (_, d) = tape.shape(features);
    let (_, dd) = tape.shape(directions);
    if d != dd {
        return Err(Error::DimensionMismatch {
            expected: dd,
            got: d,
            context: "feature dimension vs direction dimension",
        });
    }
    let stacked = tape.gather_rows(features, batch.members.clone())?;
    let normalized = normalize_segments_on_tape(tape, stacked, &batch.member_center, &batch.sizes)?;
    let dt = tape.transpose(directions);
    let p = tape.matmul(normalized, dt)?;
    sublevel_counts(
        tape,
        p,
        &batch.member_center,
        &batch.edges,
        batch.centers(),
        thresholds,
        sharpness,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirs(rows: &[&[f64]]) -> DirectionSet {
        DirectionSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), false).unwrap()
    }

    #[test]
    fn two_node_hand_example() {
        let g = FeaturedGraph::from_feature_rows(2, &[(0, 1)], &[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let t = ThresholdGrid::new(vec![-0.5, 0.5, 1.5]).unwrap();
        let e = exact_ect(&g, &dirs(&[&[1.0, 0.0]]), &t).unwrap();
        assert_eq!(e.to_integers(), vec![vec![0, 1, 1]]);
    }

    #[test]
    fn triangle_and_point_characteristics() {
        let g = FeaturedGraph::from_feature_rows(
            3,
            &[(0, 1), (1, 2), (0, 2)],
            &[vec![0.3, -0.2], vec![0.9, 0.4], vec![-0.5, 0.1]],
        )
        .unwrap();
        let t = ThresholdGrid::new(vec![-10.0, 10.0]).unwrap();
        let e = exact_ect(&g, &sample_directions(2, 4, 1).unwrap(), &t).unwrap();
        for i in 0..4 {
            assert_eq!(e.get(i, 1), 0.0);
        }
        let p = FeaturedGraph::from_feature_rows(1, &[], &[vec![0.2, 0.2]]).unwrap();
        let e = exact_ect(&p, &dirs(&[&[0.0, 1.0]]), &t).unwrap();
        assert_eq!(e.to_integers(), vec![vec![0, 1]]);
    }

    #[test]
    fn dimension_mismatch() {
        let g = FeaturedGraph::from_feature_rows(1, &[], &[vec![0.2]]).unwrap();
        let t = ThresholdGrid::default_with(4).unwrap();
        assert!(exact_ect(&g, &dirs(&[&[1.0, 0.0]]), &t).is_err());
        assert!(smooth_ect(&g, &dirs(&[&[1.0]]), &t, 0.0).is_err());
    }

    #[test]
    fn single_node_on_threshold_is_half() {
        let g = FeaturedGraph::from_feature_rows(1, &[], &[vec![0.4, 0.0]]).unwrap();
        let t = ThresholdGrid::new(vec![0.4]).unwrap();
        let e = smooth_ect(&g, &dirs(&[&[1.0, 0.0]]), &t, 16.0).unwrap();
        assert_eq!(e.get(0, 0), 0.5);
    }

    #[test]
    fn sampled_directions() {
        let s = sample_directions(1, 2, 99).unwrap();
        for i in 0..2 {
            assert_eq!(s.vector(i)[0].abs(), 1.0);
        }
        let s = sample_directions(3, 16, 5).unwrap();
        for i in 0..16 {
            let n: f64 = s.vector(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert_eq!(s, sample_directions(3, 16, 5).unwrap());
        assert!(sample_directions(0, 3, 1).is_err());
    }

    #[test]
    fn sampled_directions_are_centered() {
        // Monte-Carlo: the mean of uniform unit vectors concentrates at 0
        // with standard deviation about 1/sqrt(2n) per coordinate.
        let s = sample_directions(2, 10_000, 11).unwrap();
        let mut mean = [0.0; 2];
        for i in 0..s.len() {
            mean[0] += s.vector(i)[0];
            mean[1] += s.vector(i)[1];
        }
        let norm = (mean[0] * mean[0] + mean[1] * mean[1]).sqrt() / s.len() as f64;
        assert!(norm < 0.05, "{norm}");
    }

    #[test]
    fn renormalization() {
        let mut m = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![0.6, 0.8], vec![0.0, 0.0]]).unwrap();
        renormalize_directions(&mut m, 3);
        assert!((m[(0, 0)] - 0.6).abs() < 1e-15 && (m[(0, 1)] - 0.8).abs() < 1e-15);
        assert!((m[(1, 0)] - 0.6).abs() < 1e-12 && (m[(1, 1)] - 0.8).abs() < 1e-12);
        let n = (m[(2, 0)].powi(2) + m[(2, 1)].powi(2)).sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        let mut again = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![0.6, 0.8], vec![0.0, 0.0]]).unwrap();
        renormalize_directions(&mut again, 3);
        assert_eq!(m, again);
    }

    #[test]
    fn threshold_grid_validation() {
        let t = ThresholdGrid::default_with(16).unwrap();
        assert_eq!(t.len(), 16);
        assert_eq!(t.values()[0], -1.1);
        assert_eq!(t.values()[15], 1.1);
        assert!(ThresholdGrid::new(vec![0.0, 0.0]).is_err());
        assert!(ThresholdGrid::uniform(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn local_ect_singleton_and_path() {
        let g = FeaturedGraph::from_feature_rows(
            4,
            &[(0, 1), (1, 2)],
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![5.0, 5.0]],
        )
        .unwrap();
        let d = dirs(&[&[1.0, 0.0]]);
        let t = ThresholdGrid::new(vec![-1.5, -0.5, 0.5, 1.5]).unwrap();
        // Isolated node 3: neighborhood {3}, normalized feature 0.
        let e = local_ect(&g, 3, 1, &d, &t, EctMode::Exact).unwrap();
        assert_eq!(e.to_integers(), vec![vec![0, 0, 1, 1]]);
        // Node 1 with one hop: the whole path, normalized to -1, 0, 1.
        // t=-0.5: {0} -> 1; t=0.5: {0,1} + edge -> 1; t=1.5: 3 - 2 -> 1.
        let e = local_ect(&g, 1, 1, &d, &t, EctMode::Exact).unwrap();
        assert_eq!(e.to_integers(), vec![vec![0, 1, 1, 1]]);
        assert!(local_ect(&g, 1, 0, &d, &t, EctMode::Exact).is_err());
    }

    #[test]
    fn batched_local_matches_per_node() {
        let g = FeaturedGraph::from_feature_rows(
            5,
            &[(0, 1), (1, 2), (2, 3), (1, 3)],
            &[vec![0.1, 0.7], vec![-0.4, 0.2], vec![0.9, -0.3], vec![0.0, 0.5], vec![0.3, 0.3]],
        )
        .unwrap();
        let d = sample_directions(2, 3, 4).unwrap();
        let t = ThresholdGrid::default_with(5).unwrap();
        for hops in [1, 2] {
            let nb = NeighborhoodBatch::for_graph(&g, hops).unwrap();
            let mut tape = Tape::new();
            let x = tape.constant(g.features().clone());
            let dv = tape.constant(d.as_matrix().clone());
            let out = local_smooth_ect_on_tape(&mut tape, x, &nb, dv, &t.shared(), 8.0).unwrap();
            for v in 0..5 {
                let single = local_ect(&g, v, hops, &d, &t, EctMode::Smoothed { sharpness: 8.0 }).unwrap();
                for (a, b) in tape.value(out).row(v).iter().zip(single.flatten()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
