#![allow(dead_code)]

use protolens::data::{Cell, Dataset};
use protolens::forest::{fit_forest, ForestParams, LeafVector, TrainedForest};
use protolens::proximity::DistanceMatrix;
use protolens::selection::{FiMatrix, ScoreMatrix};
use protolens::alike::SimilarityOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random labelled data with some signal in the first two columns and an
/// optional share of missing cells.
pub fn random_dataset(seed: u64, n: usize, d: usize, n_classes: usize, missing_rate: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % n_classes;
        labels.push(y);
        for j in 0..d {
            let shift = if j < 2 { y as f64 } else { 0.0 };
            let v: f64 = rng.random_range(-1.0..1.0) + shift;
            let cell = if rng.random::<f64>() < missing_rate { None } else { Some(v) };
            cells.push(cell);
        }
    }
    Dataset::from_flat(
        (0..d).map(|j| format!("x{j}")).collect(),
        cells,
        labels,
        (0..n_classes).map(|c| format!("c{c}")).collect(),
    )
    .unwrap()
}

pub fn small_forest(ds: &Dataset, n_trees: usize, max_depth: usize, seed: u64) -> TrainedForest {
    fit_forest(
        ds,
        &ForestParams {
            n_trees,
            max_depth,
            ..ForestParams::default()
        },
        seed,
    )
    .unwrap()
}

/// Distance matrix from random leaf vectors over `t` trees with few leaves,
/// so ties and exact agreements are common.
pub fn random_distances(rng: &mut ChaCha8Rng, n: usize, t: usize) -> DistanceMatrix {
    let leaves: Vec<LeafVector> = (0..n)
        .map(|_| LeafVector((0..t).map(|_| rng.random_range(0..3u32)).collect()))
        .collect();
    DistanceMatrix::from_leaf_vectors(&leaves).unwrap()
}

/// Non-negative unit-share score rows, as produced by the alike
/// preprocessing with normalization on.
pub fn random_scores(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ScoreMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().map(|v| v * v).sum();
            raw.iter().map(|v| v * v / total).collect()
        })
        .collect();
    ScoreMatrix::from_rows(&rows).unwrap()
}

pub fn random_fi(rng: &mut ChaCha8Rng, n: usize, d: usize, op: SimilarityOperator) -> FiMatrix {
    FiMatrix::from_scores(&random_scores(rng, n, d), op)
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, n_classes: usize) -> Vec<usize> {
    // every class present
    let mut labels: Vec<usize> = (0..n).map(|i| if i < n_classes { i } else { rng.random_range(0..n_classes) }).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

pub fn row_cells(values: &[f64]) -> Vec<Cell> {
    values.iter().map(|&v| Some(v)).collect()
}

/// Objective of `protos` over `members`, summing members in order.
pub fn restricted_objective(dist: &DistanceMatrix, fi: &FiMatrix, beta: f64, members: &[usize], protos: &[usize]) -> f64 {
    members
        .iter()
        .map(|&i| {
            protos
                .iter()
                .map(|&j| dist.get(i, j) + beta * fi.get(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Reference greedy selection that only ever reads the distance matrix:
/// every candidate's objective is recomputed from scratch.
pub mod raw {
    use protolens::proximity::DistanceMatrix;

    pub fn objective(dist: &DistanceMatrix, members: &[usize], protos: &[usize]) -> f64 {
        members
            .iter()
            .map(|&i| protos.iter().map(|&j| dist.get(i, j)).fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// Lowest-index candidate minimizing the objective of `chosen ∪ {c}`.
    fn best(dist: &DistanceMatrix, members: &[usize], candidates: &[usize], chosen: &[usize]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for &c in candidates {
            if chosen.contains(&c) {
                continue;
            }
            let mut with = chosen.to_vec();
            with.push(c);
            let f = objective(dist, members, &with);
            if best.is_none_or(|(_, bf)| f < bf) {
                best = Some((c, f));
            }
        }
        best
    }

    pub fn gkm(dist: &DistanceMatrix, predicted: &[usize], k: usize) -> Vec<usize> {
        let mut classes = predicted.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut out = Vec::new();
        for c in classes {
            let members: Vec<usize> = (0..predicted.len()).filter(|&i| predicted[i] == c).collect();
            let mut chosen = Vec::new();
            for _ in 0..k {
                let (b, _) = best(dist, &members, &members, &chosen).unwrap();
                chosen.push(b);
            }
            out.extend(chosen);
        }
        out
    }

    pub fn sma(dist: &DistanceMatrix, m: usize) -> Vec<usize> {
        let all: Vec<usize> = (0..dist.len()).collect();
        let mut chosen = Vec::new();
        for _ in 0..m {
            let (b, _) = best(dist, &all, &all, &chosen).unwrap();
            chosen.push(b);
        }
        chosen
    }

    pub fn apete(dist: &DistanceMatrix, predicted: &[usize], threshold: f64) -> Vec<usize> {
        let all: Vec<usize> = (0..dist.len()).collect();
        let mut chosen: Vec<usize> = Vec::new();
        let mut f_prev = f64::INFINITY;
        while let Some((b, f_new)) = best(dist, &all, &all, &chosen) {
            let covered = predicted
                .iter()
                .all(|c| chosen.iter().any(|&p| predicted[p] == *c));
            if covered {
                let gain = f_prev - f_new;
                if gain <= 0.0 || (f_prev != 0.0 && gain / f_prev.abs() < threshold) {
                    break;
                }
            }
            chosen.push(b);
            f_prev = f_new;
        }
        chosen
    }
}

pub fn hand_params(n_trees: usize) -> protolens::forest::TrainParams {
    protolens::forest::TrainParams {
        n_trees,
        max_depth: 2,
        min_leaf: 1,
        features_per_split: 1,
        bootstrap: false,
        seed: 0,
    }
}

/// Stump on `feature` at threshold 0 with the given leaf class counts.
pub fn stump(feature: usize, left: Vec<u64>, right: Vec<u64>) -> protolens::forest::Tree {
    use protolens::forest::{Node, Tree};
    Tree::new(vec![
        Node::Internal {
            feature,
            threshold: 0.0,
            missing_goes_left: true,
            left: 1,
            right: 2,
        },
        Node::Leaf {
            leaf_id: 0,
            class_counts: left,
        },
        Node::Leaf {
            leaf_id: 1,
            class_counts: right,
        },
    ])
    .unwrap()
}

pub fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

/// Features tested by at least one split of the forest.
pub fn used_features(forest: &TrainedForest) -> Vec<bool> {
    let mut used = vec![false; forest.n_features()];
    for tree in forest.trees() {
        for node in tree.nodes() {
            if let protolens::forest::Node::Internal { feature, .. } = node {
                used[*feature] = true;
            }
        }
    }
    used
}
