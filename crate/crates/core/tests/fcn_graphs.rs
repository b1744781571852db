mod common;

use ndarray::{array, Array2};
use proptest::prelude::*;
use roinet::embedding::{Embedding, Method, MethodParams, PcaParams};
use roinet::fcn::{
    adjacency, build_fcn, fisher_z, fisher_z_scalar, mapper_complex, mapper_graph, pearson_from_signal,
    threshold_graph, AdjacencyMatrix, CorrKind, CorrMatrix, FcnConfig, FcnGraph, FcnMethod, MapperParams,
    Provenance,
};
use roinet::data::{standardize, synth_cohort, CohortSpec};
use roinet::RoiAtlas;

use common::seeded_matrix;

fn emb(points: &[[f64; 2]]) -> Embedding {
    let coords = Array2::from_shape_fn((points.len(), 2), |(i, k)| points[i][k]);
    Embedding::new(coords, Method::Pca, MethodParams::Pca(PcaParams::default()), 0).unwrap()
}

fn single_cell(eps: f64) -> MapperParams {
    MapperParams { n_intervals: [1, 1], overlap: 0.0, cluster_eps: Some(eps), ..MapperParams::default() }
}

/// Two-pass covariance: means first, then centred cross products.
fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn pearson_agrees_with_two_pass_oracle() {
    let x = [1.0, 2.0, 3.0, 5.0];
    let y = [2.0, 2.0, 4.0, 5.0];
    let s = Array2::from_shape_fn((4, 2), |(t, c)| if c == 0 { x[t] } else { y[t] });
    let c = pearson_from_signal(s.view()).unwrap();
    assert!((c.values[[0, 1]] - two_pass_pearson(&x, &y)).abs() < 1e-12);
    assert_eq!(c.values[[0, 0]], 1.0);
    assert_eq!(c.values[[1, 1]], 1.0);
}

/// atanh(r) = Σ r^(2k+1)/(2k+1).
fn atanh_series(r: f64) -> f64 {
    (0..200).map(|k| r.powi(2 * k + 1) / (2 * k + 1) as f64).sum()
}

#[test]
fn fisher_half_matches_series() {
    let z = fisher_z_scalar(0.5);
    assert!((z - atanh_series(0.5)).abs() < 1e-9);
    assert!((z - 0.549306144334).abs() < 1e-9);
}

#[test]
fn threshold_handcrafted_four_by_four() {
    let v = array![
        [1.0, 0.7, -0.2, 0.5],
        [0.7, 1.0, -0.6, 0.1],
        [-0.2, -0.6, 1.0, 0.49],
        [0.5, 0.1, 0.49, 1.0]
    ];
    let g = threshold_graph(&CorrMatrix { values: v, kind: CorrKind::Pearson }, 0.5).unwrap();
    let edges: Vec<_> = g.edges().iter().copied().collect();
    assert_eq!(edges, vec![(0, 1), (0, 3), (1, 2)]);
}

#[test]
fn threshold_above_max_is_empty() {
    let s = seeded_matrix(30, 6, 4);
    let c = pearson_from_signal(s.view()).unwrap();
    assert_eq!(threshold_graph(&c, 1.0 + 1e-9).unwrap().edge_count(), 0);
}

#[test]
fn noise_free_blocks_give_block_cliques() {
    let spec = CohortSpec::two_group(1, 12, 3, 80, 1e-4, 8);
    let rec = &synth_cohort(&spec).unwrap()[0];
    let rec = standardize(rec, &RoiAtlas::numbered(12).unwrap()).unwrap();
    let mut cfg = FcnConfig::new(FcnMethod::Pearson);
    cfg.tau = 0.99;
    let g = build_fcn(&rec, &cfg, 0).unwrap();
    let blocks = &spec.block_assignments;
    for i in 0..12 {
        for j in (i + 1)..12 {
            if blocks[i] == blocks[j] {
                assert!(g.has_edge(i, j), "{i}-{j}");
            }
        }
    }
}

#[test]
fn mapper_two_separated_pairs() {
    let e = emb(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]);
    let g = mapper_graph(&e, &single_cell(0.5)).unwrap();
    let edges: Vec<_> = g.edges().iter().copied().collect();
    assert_eq!(edges, vec![(0, 1), (2, 3)]);
    assert_eq!(g.provenance.method_name(), "pca");
}

#[test]
fn mapper_one_cluster_is_complete() {
    let e = emb(&[[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [0.3, 0.3], [0.15, 0.15]]);
    let g = mapper_graph(&e, &single_cell(1.0)).unwrap();
    assert_eq!(g.edge_count(), 10);
}

#[test]
fn mapper_overlap_point_joins_sides() {
    // Cover of x in [0, 2] with two intervals at 50% overlap: [0, 4/3] and [2/3, 2].
    // The point at x = 1 sits in both and links to each side at eps = 1.
    let e = emb(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
    let params = MapperParams { n_intervals: [2, 1], overlap: 0.5, cluster_eps: Some(1.0), ..MapperParams::default() };
    let cx = mapper_complex(&e, &params).unwrap();
    assert_eq!(cx.clusters.len(), 2);
    assert_eq!(cx.clusters[0].members, vec![0, 1]);
    assert_eq!(cx.clusters[1].members, vec![1, 2]);
    assert_eq!(cx.cluster_edges, vec![(0, 1)]);
    let edges: Vec<_> = cx.graph.edges().iter().copied().collect();
    assert_eq!(edges, vec![(0, 1), (1, 2)]);
}

#[test]
fn mapper_no_overlap_leaves_sides_apart() {
    let e = emb(&[[0.0, 0.0], [0.9, 0.0], [2.0, 0.0]]);
    let params = MapperParams { n_intervals: [2, 1], overlap: 0.05, cluster_eps: Some(1.5), ..MapperParams::default() };
    let g = mapper_graph(&e, &params).unwrap();
    assert!(g.has_edge(0, 1));
    assert!(!g.has_edge(1, 2));
}

#[test]
fn mapper_rejects_empty_and_bad_params() {
    let e = Embedding::new(Array2::zeros((0, 2)), Method::Pca, MethodParams::Pca(PcaParams::default()), 0).unwrap();
    assert!(mapper_graph(&e, &MapperParams::default()).is_err());
    let e = emb(&[[0.0, 0.0], [1.0, 1.0]]);
    let bad = MapperParams { overlap: 0.9, ..MapperParams::default() };
    assert!(mapper_graph(&e, &bad).is_err());
}

#[test]
fn adjacency_examples() {
    let g = FcnGraph::new(3, Provenance::Manual);
    assert_eq!(adjacency(&g).values(), &Array2::<f64>::zeros((3, 3)));
    let g = FcnGraph::from_edges(3, [(0, 1)], Provenance::Manual).unwrap();
    let a = adjacency(&g);
    assert_eq!(a.values().sum(), 2.0);
    assert_eq!(a.values()[[0, 1]], 1.0);
    assert_eq!(a.values()[[1, 0]], 1.0);
}

#[test]
fn graph_json_and_csv_round_trip() {
    let g = FcnGraph::from_edges(5, [(0, 4), (1, 2), (2, 3)], Provenance::Pearson { tau: 0.5 }).unwrap();
    let json = serde_json::to_string(&g.to_json()).unwrap();
    let back = FcnGraph::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, g);
    let a = adjacency(&g);
    assert_eq!(AdjacencyMatrix::from_csv(&a.to_csv()).unwrap(), a);
    let dot = g.to_dot("s1", &RoiAtlas::numbered(5).unwrap());
    assert!(dot.contains("ROI_1") && dot.contains("--"));
}

fn arb_points() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b)| [a, b]), 2..25)
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..15).prop_flat_map(|n| {
        let pairs = prop::collection::vec((0..n, 0..n), 0..40)
            .prop_map(|v| v.into_iter().filter(|(a, b)| a != b).collect::<Vec<_>>());
        (Just(n), pairs)
    })
}

proptest! {
    #[test]
    fn pearson_symmetric_unit_diagonal(seed in 0u64..500, t in 5usize..30, r in 2usize..8) {
        let s = seeded_matrix(t, r, seed);
        let c = pearson_from_signal(s.view()).unwrap();
        for i in 0..r {
            prop_assert_eq!(c.values[[i, i]], 1.0);
            for j in 0..r {
                prop_assert_eq!(c.values[[i, j]], c.values[[j, i]]);
                prop_assert!(c.values[[i, j]].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn fisher_is_odd(seed in 0u64..500) {
        let s = seeded_matrix(12, 5, seed);
        let c = pearson_from_signal(s.view()).unwrap();
        let neg = CorrMatrix { values: c.values.mapv(|v| -v), kind: CorrKind::Pearson };
        let z = fisher_z(&c).unwrap();
        let zn = fisher_z(&neg).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    prop_assert_eq!(z.values[[i, j]], -zn.values[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn threshold_monotone(seed in 0u64..500, t1 in 0.01..1.0f64, t2 in 0.01..1.0f64) {
        let s = seeded_matrix(10, 7, seed);
        let c = pearson_from_signal(s.view()).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let g_lo = threshold_graph(&c, lo).unwrap();
        let g_hi = threshold_graph(&c, hi).unwrap();
        prop_assert!(g_hi.edges().is_subset(g_lo.edges()));
    }

    #[test]
    fn mapper_translation_invariant(pts in arb_points(), dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
        let params = MapperParams { n_intervals: [3, 3], ..MapperParams::default() };
        let shifted: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        let a = mapper_graph(&emb(&pts), &params).unwrap();
        let b = mapper_graph(&emb(&shifted), &params).unwrap();
        // Rounding in the shift can move a point across an interval edge only
        // when it sits within a few ulps of it, which random draws avoid.
        prop_assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn mapper_edges_share_a_cluster(pts in arb_points()) {
        let cx = mapper_complex(&emb(&pts), &MapperParams::default()).unwrap();
        for &(i, j) in cx.graph.edges() {
            prop_assert!(cx.clusters.iter().any(|c| c.members.contains(&i) && c.members.contains(&j)));
        }
    }

    #[test]
    fn adjacency_round_trip((n, pairs) in arb_graph()) {
        let g = FcnGraph::from_edges(n, pairs, Provenance::Manual).unwrap();
        let a = adjacency(&g);
        for i in 0..n {
            prop_assert_eq!(a.values()[[i, i]], 0.0);
        }
        let transposed = a.values().t().to_owned();
        prop_assert_eq!(a.values(), &transposed);
        let back = a.to_graph(Provenance::Manual);
        prop_assert_eq!(back.edges(), g.edges());
    }
}
