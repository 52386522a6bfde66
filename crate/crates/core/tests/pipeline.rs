mod common;

use std::path::PathBuf;

use protolens::alike::{identify_alike_parts, preprocess_scores, AlikeConfig, FeatureMask};
use protolens::attribution::{saabas_attribution, shapley_bruteforce, Attributor, Estimator, NodeMeans};
use protolens::data::{load_csv, stratified_split, write_csv, Dataset};
use protolens::eval::stats::{exact_p_value, mid_ranks, normal_p_value, wilcoxon_signed_rank_with};
use protolens::eval::{
    baseline_fit_predict, fidelity, mask_statistics, surrogate_predict, wilcoxon_signed_rank, BaselineKind, PMethod,
};
use protolens::forest::{fit_forest, save_forest, ForestParams, TrainedForest};
use protolens::proximity::{distance_matrix, tree_distance};
use protolens::selection::{select_from_attributions, PrototypeSet, SelectionConfig};
use protolens::synthetic::{blobs2, BLOBS2_LABEL_COLUMN, BLOBS2_SEED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bundled_blobs2() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/blobs2.csv")
}

fn blobs2_forest(train: &Dataset) -> TrainedForest {
    fit_forest(train, &ForestParams::default(), 42).unwrap()
}

#[test]
fn bundled_blobs2_matches_recipe() {
    let mut regenerated = Vec::new();
    write_csv(&blobs2(BLOBS2_SEED), &mut regenerated, BLOBS2_LABEL_COLUMN).unwrap();
    let on_disk = std::fs::read(bundled_blobs2()).unwrap();
    assert_eq!(on_disk, regenerated);
    let ds = load_csv(bundled_blobs2(), BLOBS2_LABEL_COLUMN, &[String::new()]).unwrap();
    assert_eq!((ds.n_rows(), ds.n_features(), ds.n_classes()), (600, 8, 2));
    assert_eq!(ds.missing_count(), 0);
    assert_eq!(ds.class_counts(), vec![300, 300]);
}

#[test]
fn forest_generalizes_on_blobs2_and_is_reproducible() {
    let ds = blobs2(BLOBS2_SEED);
    let split = stratified_split(&ds, 0.2, 42).unwrap();
    let forest = blobs2_forest(&split.train);
    let pred = forest.predict_all(&split.test).unwrap();
    let acc = pred.iter().zip(split.test.labels()).filter(|(a, b)| a == b).count() as f64
        / split.test.n_rows() as f64;
    assert!(acc >= 0.95, "hold-out accuracy {acc}");
    assert_eq!(save_forest(&forest), save_forest(&blobs2_forest(&split.train)));
}

#[test]
fn saabas_conservation_on_blobs2() {
    let ds = blobs2(BLOBS2_SEED);
    let forest = blobs2_forest(&ds);
    let attributor = Attributor::new(&forest, Estimator::Saabas, None).unwrap();
    for x in ds.rows() {
        let a = attributor.attribute(x).unwrap();
        let p = forest.predict_proba(x).unwrap()[a.target_class];
        assert!((a.bias + a.phi.iter().sum::<f64>() - p).abs() < 1e-9);
    }
}

#[test]
fn shapley_properties_on_hand_forest() {
    // feature 0 and 1 stumps with mirrored leaves; feature 2 unused
    let forest = TrainedForest::new(
        vec![
            common::stump(0, vec![8, 2], vec![1, 9]),
            common::stump(1, vec![8, 2], vec![1, 9]),
        ],
        2,
        common::names(3),
        common::hand_params(2),
    )
    .unwrap();
    let bg = Dataset::from_flat(
        common::names(3),
        vec![
            Some(-1.0), Some(-1.0), Some(0.3),
            Some(1.0), Some(-1.0), Some(-0.7),
            Some(-1.0), Some(1.0), Some(2.0),
        ],
        vec![0, 1, 0],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let x = common::row_cells(&[1.0, 1.0, 5.0]);
    let a = shapley_bruteforce(&forest, &x, &bg, 1).unwrap();
    let full = forest.predict_proba(&x).unwrap()[1];
    assert!((a.bias + a.phi.iter().sum::<f64>() - full).abs() < 1e-12);
    assert_eq!(a.phi[2], 0.0);
    // features 0 and 1 differ only through the background, so swap the
    // background columns and the attributions swap with them
    let swapped = Dataset::from_flat(
        common::names(3),
        vec![
            Some(-1.0), Some(-1.0), Some(0.3),
            Some(-1.0), Some(1.0), Some(-0.7),
            Some(1.0), Some(-1.0), Some(2.0),
        ],
        vec![0, 1, 0],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let b = shapley_bruteforce(&forest, &x, &swapped, 1).unwrap();
    assert!((a.phi[0] - b.phi[1]).abs() < 1e-12);
    assert!((a.phi[1] - b.phi[0]).abs() < 1e-12);
}

#[test]
fn single_feature_forest_puts_all_mass_on_that_feature() {
    let forest = TrainedForest::new(
        vec![common::stump(1, vec![9, 1], vec![2, 8]); 3],
        2,
        common::names(3),
        common::hand_params(3),
    )
    .unwrap();
    let bg = common::random_dataset(5, 20, 3, 2, 0.0);
    let x = common::row_cells(&[0.2, 0.7, -0.1]);
    let sh = shapley_bruteforce(&forest, &x, &bg, 1).unwrap();
    let sa = saabas_attribution(&forest, &x, 1).unwrap();
    for a in [&sh.phi, &sa.phi] {
        assert_eq!(a[0], 0.0);
        assert_eq!(a[2], 0.0);
        assert!(a[1] > 0.0);
    }
}

#[test]
fn unused_features_get_zero_shapley_credit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for round in 0..10 {
        let d = rng.random_range(2..=6);
        let mut ds = common::random_dataset(round, 40, d, 2, 0.1);
        // the last feature is constant, so no split can use it
        let cells: Vec<_> = ds
            .rows()
            .flat_map(|r| {
                let mut r = r.to_vec();
                r[d - 1] = Some(1.0);
                r
            })
            .collect();
        ds = Dataset::from_flat(ds.feature_names().to_vec(), cells, ds.labels().to_vec(), ds.label_names().to_vec())
            .unwrap();
        let forest = common::small_forest(&ds, 4, 3, round);
        let used = common::used_features(&forest);
        assert!(!used[d - 1]);
        let bg = ds.subset(&(0..10).collect::<Vec<_>>()).unwrap();
        let x = ds.row(rng.random_range(0..40)).to_vec();
        let a = shapley_bruteforce(&forest, &x, &bg, 1).unwrap();
        for (j, &u) in used.iter().enumerate() {
            if !u {
                assert_eq!(a.phi[j], 0.0);
            }
        }
    }
}

#[test]
fn node_means_shared_by_attributor() {
    let ds = common::random_dataset(1, 50, 4, 3, 0.2);
    let forest = common::small_forest(&ds, 6, 4, 1);
    let means = NodeMeans::new(&forest);
    for x in ds.rows().take(10) {
        let a = protolens::attribution::saabas_with(&forest, &means, x, 2).unwrap();
        let b = saabas_attribution(&forest, x, 2).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn logistic_baseline_on_blobs2() {
    let ds = blobs2(BLOBS2_SEED);
    let split = stratified_split(&ds, 0.2, 42).unwrap();
    let forest = blobs2_forest(&split.train);
    let train = split.train.with_labels(forest.predict_all(&split.train).unwrap()).unwrap();
    let test = split.test.with_labels(forest.predict_all(&split.test).unwrap()).unwrap();
    let lr = baseline_fit_predict(BaselineKind::LogisticRegression, &train, &test).unwrap();
    assert!(lr.fidelity >= 0.95, "{}", lr.fidelity);
    assert_eq!(lr.method, "logistic_regression");

    let dt = fit_forest(
        &train,
        &ForestParams {
            n_trees: 1,
            max_depth: 15,
            features_per_split: Some(8),
            bootstrap: false,
            ..ForestParams::default()
        },
        0,
    )
    .unwrap();
    assert!(dt.trees()[0].depth() <= 15);
}

#[test]
fn baselines_tolerate_missing_cells() {
    let ds = common::random_dataset(9, 120, 4, 2, 0.25);
    let split = stratified_split(&ds, 0.25, 1).unwrap();
    for kind in BaselineKind::ALL {
        let r = baseline_fit_predict(kind, &split.train, &split.test).unwrap();
        assert!((0.0..=1.0).contains(&r.fidelity));
        assert_eq!(r.n_test, split.test.n_rows());
    }
}

#[test]
fn surrogate_matches_exhaustive_nearest() {
    let ds = blobs2(7);
    let forest = common::small_forest(&ds, 30, 6, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let idx: Vec<usize> = (0..12).map(|_| rng.random_range(0..600)).collect();
    let protos = PrototypeSet {
        labels: idx.iter().map(|&i| forest.predict(ds.row(i)).unwrap()).collect(),
        indices: idx,
    };
    for _ in 0..20 {
        let x = ds.row(rng.random_range(0..600));
        let got = surrogate_predict(&protos, &forest, &ds, x).unwrap();
        let lx = forest.leaf_assignment(x).unwrap();
        let mut best = (usize::MAX, f64::INFINITY);
        for (pos, &p) in protos.indices.iter().enumerate() {
            let d = tree_distance(&lx, &forest.leaf_assignment(ds.row(p)).unwrap()).unwrap();
            if d < best.1 {
                best = (pos, d);
            }
        }
        assert_eq!(got.position, best.0);
        assert_eq!(got.distance, best.1);
        assert_eq!(got.label, protos.labels[best.0]);
    }
}

#[test]
fn selection_labels_are_black_box_predictions() {
    let ds = blobs2(BLOBS2_SEED);
    let split = stratified_split(&ds, 0.2, 42).unwrap();
    let forest = blobs2_forest(&split.train);
    let predicted = forest.predict_all(&split.train).unwrap();
    let dist = distance_matrix(&forest, &split.train).unwrap();
    let attr = Attributor::new(&forest, Estimator::Saabas, None).unwrap().matrix(&split.train).unwrap();
    let cfg = SelectionConfig {
        beta: 0.5,
        k_per_class: 2,
        ..SelectionConfig::default()
    };
    let s = select_from_attributions(&dist, Some(&attr), &predicted, &cfg).unwrap();
    assert_eq!(s.prototypes.len(), 4);
    for (&i, &l) in s.prototypes.indices.iter().zip(&s.prototypes.labels) {
        assert_eq!(forest.predict(split.train.row(i)).unwrap(), l);
    }
    let r = fidelity(&s.prototypes, &forest, &split.train, &split.test).unwrap();
    assert!((0.0..=1.0).contains(&r.fidelity));
    assert_eq!(r.per_class_agreement.iter().sum::<usize>(), r.agreements);
}

#[test]
fn alike_masks_match_threshold_recount_on_blobs2() {
    let ds = blobs2(BLOBS2_SEED);
    let forest = blobs2_forest(&ds);
    let attributor = Attributor::new(&forest, Estimator::Saabas, None).unwrap();
    let cfg = AlikeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..30 {
        let (i, j) = (rng.random_range(0..600), rng.random_range(0..600));
        let parts = identify_alike_parts(&attributor, ds.row(i), ds.row(j), &cfg).unwrap();
        let xh = preprocess_scores(&attributor.attribute(ds.row(i)).unwrap().phi, &cfg);
        let ph = preprocess_scores(&attributor.attribute(ds.row(j)).unwrap().phi, &cfg);
        let w: Vec<f64> = xh.iter().zip(&ph).map(|(a, b)| a * b).collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let above = w.iter().filter(|&&v| v > mean).count();
        assert_eq!(parts.mask.count_ones(), above.max(1));
    }
}

/// `2 · P(T ≤ w)` by listing all sign assignments.
fn enumerate_p(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len();
    let hits = (0u32..1 << n)
        .filter(|signs| {
            let t: f64 = (0..n).filter(|k| signs >> k & 1 == 1).map(|k| ranks[k]).sum();
            t <= w + 1e-9
        })
        .count();
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn wilcoxon_exact_matches_enumeration_up_to_ten() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in 1..=10 {
        for _ in 0..20 {
            // coarse values so ties and mid-ranks are common
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-4..=4) as f64 * 0.5, 0.0))
                .collect();
            let Ok(r) = wilcoxon_signed_rank(&pairs) else { continue };
            let diffs: Vec<f64> = pairs.iter().map(|p| p.0).filter(|d| *d != 0.0).map(f64::abs).collect();
            let ranks = mid_ranks(&diffs);
            assert!((r.p_value - enumerate_p(&ranks, r.statistic)).abs() < 1e-12);
        }
    }
}

#[test]
fn wilcoxon_textbook_values() {
    // n = 10 without ties: P(T ≤ 8) = 25/1024
    let ranks: Vec<f64> = (1..=10).map(f64::from).collect();
    assert!((exact_p_value(&ranks, 8.0) - 50.0 / 1024.0).abs() < 1e-15);
    // n = 5: P(T ≤ 0) = 1/32
    let ranks: Vec<f64> = (1..=5).map(f64::from).collect();
    assert!((exact_p_value(&ranks, 0.0) - 2.0 / 32.0).abs() < 1e-15);
}

#[test]
fn wilcoxon_normal_and_exact_paths_agree_at_fifteen() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let pairs: Vec<(f64, f64)> = (0..15)
            .map(|_| (rng.random_range(-1.0..1.3), rng.random_range(-1.0..1.0)))
            .collect();
        let exact = wilcoxon_signed_rank_with(&pairs, PMethod::Exact).unwrap();
        let normal = wilcoxon_signed_rank_with(&pairs, PMethod::Normal).unwrap();
        assert_eq!(exact.method, PMethod::Exact);
        assert_eq!(normal.method, PMethod::Normal);
        assert!((exact.p_value - normal.p_value).abs() < 0.02, "{} vs {}", exact.p_value, normal.p_value);
    }
    let pairs: Vec<(f64, f64)> = (0..25).map(|_| (rng.random_range(0.0..1.0), 0.4)).collect();
    let auto = wilcoxon_signed_rank(&pairs).unwrap();
    assert_eq!(auto.method, PMethod::Normal);
    let diffs: Vec<f64> = pairs.iter().map(|p| (p.0 - p.1).abs()).collect();
    assert_eq!(auto.p_value, normal_p_value(&mid_ranks(&diffs), auto.statistic));
}

#[test]
fn mask_statistics_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let d = 9;
    let masks: Vec<FeatureMask> = (0..100)
        .map(|_| FeatureMask::from_bits((0..d).map(|_| rng.random_bool(0.3)).collect()))
        .collect();
    let s = mask_statistics(&masks).unwrap();
    for j in 0..d {
        let naive = masks.iter().filter(|m| m.bits()[j]).count();
        assert_eq!(s.activation_counts[j], naive);
        assert!(naive <= 100);
    }
    let mut lens: Vec<usize> = masks.iter().map(|m| m.bits().iter().filter(|&&b| b).count()).collect();
    lens.sort_unstable();
    assert_eq!(s.lengths.min, lens[0] as f64);
    assert_eq!(s.lengths.max, lens[99] as f64);
    assert_eq!(s.lengths.median, (lens[49] + lens[50]) as f64 / 2.0);
    assert!((s.lengths.mean - lens.iter().sum::<usize>() as f64 / 100.0).abs() < 1e-12);
}
