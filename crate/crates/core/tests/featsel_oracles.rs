mod common;

use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use roinet::classifier::AttentionDistribution;
use roinet::featsel::{
    build_patient_roi_matrix, coefficient_variation, group_mean_attention, kld, rank_rois_kld, select_rois,
    KldDirection, PatientRoiMatrix, DEFAULT_EPSILON, DEFAULT_K,
};
use roinet::{Group, RoiAtlas};

use common::seeded_matrix;

fn att(id: &str, group: Group, values: Array2<f64>) -> AttentionDistribution {
    AttentionDistribution { subject_id: id.into(), group, values }
}

/// Row-normalised positive matrix from a seed.
fn stochastic(r: usize, seed: u64) -> Array2<f64> {
    let mut m = seeded_matrix(r, r, seed).mapv(|v| (2.0 * v).exp());
    for mut row in m.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    m
}

/// Σ p ln(p/q) for strictly positive inputs, no smoothing.
fn plain_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

#[test]
fn kld_reference_values() {
    let v = kld(array![0.5, 0.5].view(), array![0.9, 0.1].view(), DEFAULT_EPSILON).unwrap();
    let direct = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
    assert!((v - direct).abs() < 1e-9);
    assert!((v - 0.510826).abs() < 1e-6);
    let limit = kld(array![1.0, 0.0].view(), array![0.5, 0.5].view(), 1e-10).unwrap();
    assert!((limit - 2f64.ln()).abs() < 1e-6);
}

#[test]
fn group_mean_examples() {
    let a = array![[0.2, 0.8], [0.6, 0.4]];
    let b = array![[0.4, 0.6], [1.0, 0.0]];
    let g = group_mean_attention(&[att("a", Group::Ad, a.clone())]).unwrap();
    assert_eq!(g.mean_attn, a);
    let g = group_mean_attention(&[att("a", Group::Ad, a), att("b", Group::Ad, b)]).unwrap();
    let expected = array![[0.3, 0.7], [0.8, 0.2]];
    for (x, y) in g.mean_attn.iter().zip(expected.iter()) {
        assert!((x - y).abs() < 1e-15);
    }
    assert_eq!(g.n_subjects, 2);
    let u = Array2::from_elem((3, 3), 1.0 / 3.0);
    let g = group_mean_attention(&[att("a", Group::Cn, u.clone()), att("b", Group::Cn, u.clone())]).unwrap();
    assert_eq!(g.mean_attn, u);
    assert!(group_mean_attention(&[]).is_err());
    assert!(group_mean_attention(&[att("a", Group::Cn, u.clone()), att("b", Group::Ad, u)]).is_err());
}

#[test]
fn ranking_matches_enumeration() {
    let a = array![[0.7, 0.2, 0.1], [0.3, 0.3, 0.4], [0.1, 0.1, 0.8]];
    let b = array![[0.2, 0.5, 0.3], [0.3, 0.35, 0.35], [0.6, 0.2, 0.2]];
    let ga = group_mean_attention(&[att("a", Group::Ad, a.clone())]).unwrap();
    let gb = group_mean_attention(&[att("b", Group::Mci, b.clone())]).unwrap();
    let ranking = rank_rois_kld(&ga, &gb, KldDirection::Symmetric, DEFAULT_EPSILON).unwrap();
    let mut brute: Vec<(usize, f64)> = (0..3)
        .map(|i| {
            let (p, q) = (a.row(i).to_vec(), b.row(i).to_vec());
            (i, plain_kl(&p, &q) + plain_kl(&q, &p))
        })
        .collect();
    brute.sort_by(|x, y| y.1.total_cmp(&x.1));
    for (got, want) in ranking.entries.iter().zip(&brute) {
        assert_eq!(got.0, want.0);
        assert!((got.1 - want.1).abs() < 1e-8);
    }
    let reverse = rank_rois_kld(&gb, &ga, KldDirection::Symmetric, DEFAULT_EPSILON).unwrap();
    assert_eq!(ranking, reverse);
    let forward = rank_rois_kld(&ga, &gb, KldDirection::Forward, DEFAULT_EPSILON).unwrap();
    assert!((forward.score(0).unwrap() - plain_kl(&a.row(0).to_vec(), &b.row(0).to_vec())).abs() < 1e-8);
}

#[test]
fn ranking_locality() {
    let base = stochastic(10, 3);
    let mut other = base.clone();
    other.row_mut(6).assign(&Array1::from_elem(10, 0.1));
    let ga = group_mean_attention(&[att("a", Group::Ad, base.clone())]).unwrap();
    let gb = group_mean_attention(&[att("b", Group::Cn, other)]).unwrap();
    let r = rank_rois_kld(&ga, &gb, KldDirection::Symmetric, DEFAULT_EPSILON).unwrap();
    assert_eq!(r.entries[0].0, 6);
    assert!(r.entries[0].1 > 0.0);
    assert!(r.entries[1..].iter().all(|e| e.1 == 0.0));
    assert_eq!(r.entries.len(), 10);
    let gb2 = group_mean_attention(&[att("b", Group::Cn, base)]).unwrap();
    let same = rank_rois_kld(&ga, &gb2, KldDirection::Symmetric, DEFAULT_EPSILON).unwrap();
    assert!(same.entries.iter().all(|e| e.1 == 0.0));
    let csv = r.to_csv(&RoiAtlas::numbered(10).unwrap());
    assert!(csv.starts_with("roi_index,roi_label,kld\n7,ROI_7,"));
}

#[test]
fn cv_scale_invariance() {
    let x = [0.3, 1.7, 2.2, 0.9];
    let scaled: Vec<f64> = x.iter().map(|v| v * 5.0).collect();
    assert!((coefficient_variation(&x).unwrap() - coefficient_variation(&scaled).unwrap()).abs() < 1e-12);
    assert!((coefficient_variation(&[1.0, 3.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
}

/// Eight ROIs; every row puts extra mass on ROIs 3 and 5 (zero-based 2 and 4),
/// scaled per subject so those columns also vary most.
fn dominated(subject: usize, group: Group) -> AttentionDistribution {
    let boost = 1.0 + subject as f64;
    let mut m = Array2::from_elem((8, 8), 1.0);
    for i in 0..8 {
        m[[i, 2]] = 4.0 * boost;
        m[[i, 4]] = 3.0 * boost;
    }
    for mut row in m.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    att(&format!("{group}_{subject}"), group, m)
}

#[test]
fn handcrafted_selection() {
    let sa: Vec<_> = (0..3).map(|s| dominated(s, Group::Ad)).collect();
    let sb: Vec<_> = (0..3).map(|s| dominated(s, Group::Cn)).collect();
    let ga = group_mean_attention(&sa).unwrap();
    let gb = group_mean_attention(&sb).unwrap();
    let sel = select_rois(&ga, &gb, &sa, &sb, 2).unwrap();
    let mut a = sel.rois[0].clone();
    a.sort_unstable();
    assert_eq!(a, vec![2, 4]);
    let export = sel.to_export(&RoiAtlas::numbered(8).unwrap());
    assert_eq!(export.groups[0].labels.len(), 2);
    assert!(export.groups[0].rois.contains(&3) && export.groups[0].rois.contains(&5));
}

#[test]
fn uniform_attention_selects_by_index() {
    let u = Array2::from_elem((12, 12), 1.0 / 12.0);
    let sa: Vec<_> = (0..2).map(|s| att(&format!("a{s}"), Group::Ad, u.clone())).collect();
    let sb: Vec<_> = (0..2).map(|s| att(&format!("b{s}"), Group::Cn, u.clone())).collect();
    let ga = group_mean_attention(&sa).unwrap();
    let gb = group_mean_attention(&sb).unwrap();
    let sel = select_rois(&ga, &gb, &sa, &sb, 3).unwrap();
    assert_eq!(sel.rois[0], vec![0, 1, 2]);
    // k beyond the ceil(12 / 4) = 3 candidates is reduced.
    let sel = select_rois(&ga, &gb, &sa, &sb, 5).unwrap();
    assert_eq!(sel.rois[1], vec![0, 1, 2]);
    assert_eq!(sel.k, 3);
}

#[test]
fn default_selection_on_full_atlas_has_29() {
    let sa: Vec<_> = (0..5).map(|s| att(&format!("a{s}"), Group::Ad, stochastic(116, 40 + s))).collect();
    let sb: Vec<_> = (0..5).map(|s| att(&format!("b{s}"), Group::Mci, stochastic(116, 80 + s))).collect();
    let ga = group_mean_attention(&sa).unwrap();
    let gb = group_mean_attention(&sb).unwrap();
    let sel = select_rois(&ga, &gb, &sa, &sb, DEFAULT_K).unwrap();
    for side in &sel.rois {
        assert_eq!(side.len(), 29);
        let mut d = side.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 29);
        assert!(d.iter().all(|&i| i < 116));
    }
    assert_eq!(sel, select_rois(&ga, &gb, &sa, &sb, DEFAULT_K).unwrap());
}

#[test]
fn patient_matrix_cells() {
    let u = Array2::from_elem((4, 4), 0.25);
    let m = build_patient_roi_matrix(&[att("s", Group::Ad, u)], &[0, 3]).unwrap();
    assert!(m.values.iter().all(|&v| v == 0.25));

    let s1 = array![[0.5, 0.5], [0.1, 0.9]];
    let s2 = array![[1.0, 0.0], [0.2, 0.8]];
    let m = build_patient_roi_matrix(&[att("x", Group::Ad, s1), att("y", Group::Ad, s2)], &[1, 0]).unwrap();
    let expected = array![[0.7, 0.3], [0.4, 0.6]];
    for (a, b) in m.values.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
    let atlas = RoiAtlas::numbered(2).unwrap();
    let back = PatientRoiMatrix::from_csv(&m.to_csv(&atlas), &atlas, Group::Ad).unwrap();
    assert_eq!(back, m);
    assert!(build_patient_roi_matrix(&[], &[0]).is_err());
}

fn arb_dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>() + 1e-12;
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]
    #[test]
    fn kld_non_negative_and_permutation_invariant(
        (p, q, shift) in (2usize..12).prop_flat_map(|n| (arb_dist(n), arb_dist(n), 0..n))
    ) {
        let pa = Array1::from(p.clone());
        let qa = Array1::from(q.clone());
        let v = kld(pa.view(), qa.view(), DEFAULT_EPSILON).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(kld(pa.view(), pa.view(), DEFAULT_EPSILON).unwrap() <= 1e-12);
        let n = p.len();
        let pp: Array1<f64> = (0..n).map(|i| p[(i + shift) % n]).collect();
        let qp: Array1<f64> = (0..n).map(|i| q[(i + shift) % n]).collect();
        let w = kld(pp.view(), qp.view(), DEFAULT_EPSILON).unwrap();
        prop_assert!((v - w).abs() <= 1e-9 * (1.0 + v.abs()));
    }

    #[test]
    fn group_mean_stays_stochastic(seeds in prop::collection::vec(0u64..1000, 1..6)) {
        let items: Vec<_> = seeds.iter().enumerate().map(|(i, &s)| att(&format!("s{i}"), Group::Cn, stochastic(7, s))).collect();
        let g = group_mean_attention(&items).unwrap();
        for row in g.mean_attn.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
        }
    }
}
