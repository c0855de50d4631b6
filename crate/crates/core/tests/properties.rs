mod common;

use std::rc::Rc;

use common::{bfs_distances, random_graph, random_matrix, random_permutation};
use leap::autodiff::Tape;
use leap::data::{GraphRecord, Target};
use leap::ect::{exact_ect, sample_directions, smooth_ect, ThresholdGrid};
use leap::encoders::{rwpe, symmetric_eigendecomposition};
use leap::graph::normalize_features;
use leap::DenseMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Rows of `m` moved so that row `i` lands at `perm[i]`.
fn permute_rows(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(m.row(i));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_features_are_centered_in_the_unit_ball(seed in any::<u64>(), n in 1usize..12, d in 1usize..5) {
        let x = random_matrix(&mut rng(seed), n, d, 3.0);
        let y = normalize_features(&x).unwrap();
        let mut max_norm = 0.0f64;
        for c in 0..d {
            let mean: f64 = (0..n).map(|r| y.row(r)[c]).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-12);
        }
        for r in 0..n {
            max_norm = max_norm.max(y.row(r).iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        prop_assert!(max_norm == 0.0 || (max_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_ignores_translation_and_scale(
        seed in any::<u64>(),
        n in 2usize..10,
        shift in -5.0f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let x = random_matrix(&mut rng(seed), n, 3, 1.0);
        let moved = x.map(|v| v * scale + shift);
        let diff = max_abs_diff(&normalize_features(&x).unwrap(), &normalize_features(&moved).unwrap());
        prop_assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn m_hop_nodes_match_breadth_first_search(seed in any::<u64>(), hops in 0usize..4, p in 0.05f64..0.5) {
        let g = random_graph(&mut rng(seed), 12, 2, p);
        for v in 0..g.num_nodes() {
            let dist = bfs_distances(&g, v);
            let expected: Vec<usize> = (0..g.num_nodes()).filter(|&w| dist[w] <= hops).collect();
            prop_assert_eq!(g.m_hop_nodes(v, hops).unwrap(), expected);
        }
    }

    #[test]
    fn exact_ect_ends_at_euler_characteristic(seed in any::<u64>(), p in 0.0f64..0.8, dirs in 1usize..8) {
        let g = random_graph(&mut rng(seed), 10, 2, p);
        let directions = sample_directions(2, dirs, seed).unwrap();
        let grid = ThresholdGrid::uniform(7, -1.5, 1.5).unwrap();
        let ect = exact_ect(&g, &directions, &grid).unwrap().to_integers();
        let chi = g.num_nodes() as i64 - g.num_edges() as i64;
        for row in ect {
            prop_assert_eq!(row[0], 0);
            prop_assert_eq!(*row.last().unwrap(), chi);
        }
    }

    #[test]
    fn transforms_ignore_node_order(seed in any::<u64>(), p in 0.0f64..0.8) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 10, 3, p);
        let h = g.permuted(&random_permutation(&mut r, g.num_nodes())).unwrap();
        let directions = sample_directions(3, 6, seed).unwrap();
        let grid = ThresholdGrid::uniform(9, -2.0, 2.0).unwrap();
        prop_assert_eq!(
            exact_ect(&g, &directions, &grid).unwrap().to_integers(),
            exact_ect(&h, &directions, &grid).unwrap().to_integers()
        );
        let (a, b) = (
            smooth_ect(&g, &directions, &grid, 16.0).unwrap(),
            smooth_ect(&h, &directions, &grid, 16.0).unwrap(),
        );
        prop_assert_eq!(a.values.as_slice(), b.values.as_slice());
    }

    #[test]
    fn smooth_ect_stays_between_vertex_and_edge_counts(seed in any::<u64>(), p in 0.0f64..0.8, sharpness in 1.0f64..64.0) {
        let g = random_graph(&mut rng(seed), 10, 2, p);
        let directions = sample_directions(2, 4, seed).unwrap();
        let grid = ThresholdGrid::uniform(11, -2.0, 2.0).unwrap();
        let s = smooth_ect(&g, &directions, &grid, sharpness).unwrap();
        let (n, m) = (g.num_nodes() as f64, g.num_edges() as f64);
        for &v in s.values.as_slice() {
            prop_assert!(v <= n + 1e-9 && v >= -m - 1e-9);
        }
    }

    #[test]
    fn sampled_directions_are_unit_vectors(seed in any::<u64>(), d in 1usize..6, count in 1usize..20) {
        let dirs = sample_directions(d, count, seed).unwrap();
        let m = dirs.as_matrix();
        prop_assert_eq!(m.shape(), (count, d));
        for r in 0..count {
            let norm = m.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_records_round_trip_losslessly(seed in any::<u64>(), p in 0.0f64..0.8, class in 0usize..5) {
        let g = random_graph(&mut rng(seed), 10, 3, p);
        let record = GraphRecord::from_graph(&g, Target::Class(class));
        let text = serde_json::to_string(&record).unwrap();
        let back: GraphRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &record);
        let h = back.to_graph().unwrap();
        prop_assert_eq!(h.edges(), g.edges());
        prop_assert_eq!(h.features().as_slice(), g.features().as_slice());
    }

    #[test]
    fn rwpe_is_permutation_equivariant(seed in any::<u64>(), p in 0.0f64..0.8, k in 1usize..6) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 10, 2, p);
        let perm = random_permutation(&mut r, g.num_nodes());
        let a = permute_rows(&rwpe(&g, k).unwrap(), &perm);
        let b = rwpe(&g.permuted(&perm).unwrap(), k).unwrap();
        prop_assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn eigendecomposition_reconstructs_symmetric_matrices(seed in any::<u64>(), n in 1usize..9) {
        let a = random_matrix(&mut rng(seed), n, n, 1.0);
        let s = DenseMatrix::from_vec(n, n, (0..n * n).map(|i| {
            let (r, c) = (i / n, i % n);
            a.row(r)[c] + a.row(c)[r]
        }).collect()).unwrap();
        let eig = symmetric_eigendecomposition(&s).unwrap();
        let v = &eig.vectors;
        let mut scaled = v.clone();
        for r in 0..n {
            for (x, lambda) in scaled.row_mut(r).iter_mut().zip(&eig.values) {
                *x *= lambda;
            }
        }
        let rebuilt = scaled.matmul(&v.transpose()).unwrap();
        prop_assert!(max_abs_diff(&rebuilt, &s) < 1e-9);
        let gram = v.transpose().matmul(v).unwrap();
        prop_assert!(max_abs_diff(&gram, &DenseMatrix::identity(n)) < 1e-9);
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn segment_sums_do_not_depend_on_row_order(seed in any::<u64>(), n in 1usize..30, segments in 1usize..5) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, n, 3, 1e3);
        let seg: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % segments).collect();
        let perm = random_permutation(&mut r, n);
        let mut seg_p = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            seg_p[p] = seg[i];
        }
        let sum = |m: DenseMatrix, s: Vec<usize>| {
            let mut tape = Tape::new();
            let v = tape.constant(m);
            let out = tape.segment_sum(v, Rc::from(s), segments).unwrap();
            tape.value(out).clone()
        };
        let a = sum(x.clone(), seg);
        let b = sum(permute_rows(&x, &perm), seg_p);
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }
}
