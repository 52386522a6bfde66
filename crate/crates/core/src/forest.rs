//! Random-forest black box: CART/Gini trees grown on bootstrap samples, with
//! native missing-value routing, leaf-level queries and a versioned JSON
//! format.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, Dataset};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: i64 = 1;

/// A node of a flat, index-addressed binary tree.
///
/// Routing rule: a present value `v` goes left iff `v <= threshold`; a
/// missing value goes left iff `missing_goes_left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        missing_goes_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_id: u32,
        class_counts: Vec<u64>,
    },
}

/// Nodes stored flat; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Validates that `nodes` form a single binary tree rooted at node 0 with
    /// unique leaf ids.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        let tree = Self { nodes };
        tree.check_shape()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn check_shape(&self) -> Result<()> {
        let len = self.nodes.len();
        if len == 0 {
            return Err(Error::CorruptPayload("tree has no nodes".into()));
        }
        let mut visited = vec![false; len];
        let mut leaf_ids = std::collections::HashSet::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if visited[id] {
                return Err(Error::CorruptPayload(format!("node {id} reached twice")));
            }
            visited[id] = true;
            match &self.nodes[id] {
                Node::Internal { left, right, .. } => {
                    for &child in [left, right] {
                        if child >= len {
                            return Err(Error::CorruptPayload(format!(
                                "node {id} points to missing child {child}"
                            )));
                        }
                        stack.push(child);
                    }
                }
                Node::Leaf { leaf_id, .. } => {
                    if !leaf_ids.insert(*leaf_id) {
                        return Err(Error::CorruptPayload(format!("duplicate leaf id {leaf_id}")));
                    }
                }
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::CorruptPayload("unreachable nodes".into()));
        }
        Ok(())
    }

    /// Index of the leaf node reached by `x`.
    pub fn route(&self, x: &[Cell]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Internal {
                    feature,
                    threshold,
                    missing_goes_left,
                    left,
                    right,
                } => {
                    let go_left = match x[*feature] {
                        Some(v) => v <= *threshold,
                        None => *missing_goes_left,
                    };
                    id = if go_left { *left } else { *right };
                }
            }
        }
    }

    /// Node indices from the root to the reached leaf, inclusive.
    pub fn path(&self, x: &[Cell]) -> Vec<usize> {
        let mut path = vec![0];
        let mut id = 0;
        while let Node::Internal {
            feature,
            threshold,
            missing_goes_left,
            left,
            right,
        } = &self.nodes[id]
        {
            let go_left = match x[*feature] {
                Some(v) => v <= *threshold,
                None => *missing_goes_left,
            };
            id = if go_left { *left } else { *right };
            path.push(id);
        }
        path
    }

    pub fn leaf_id(&self, x: &[Cell]) -> u32 {
        match &self.nodes[self.route(x)] {
            Node::Leaf { leaf_id, .. } => *leaf_id,
            Node::Internal { .. } => unreachable!("route ends at a leaf"),
        }
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { .. } => max = max.max(depth),
                Node::Internal { left, right, .. } => {
                    stack.push((*left, depth + 1));
                    stack.push((*right, depth + 1));
                }
            }
        }
        max
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Class counts aggregated over each node's subtree. For a grown tree
    /// this is the class histogram of the training rows reaching the node.
    pub fn node_counts(&self, n_classes: usize) -> Vec<Vec<u64>> {
        let mut counts = vec![vec![0u64; n_classes]; self.nodes.len()];
        // children are finalized before parents in reverse pre-order
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let Node::Internal { left, right, .. } = &self.nodes[id] {
                stack.push(*left);
                stack.push(*right);
            }
        }
        for &id in order.iter().rev() {
            match &self.nodes[id] {
                Node::Leaf { class_counts, .. } => counts[id].clone_from(class_counts),
                Node::Internal { left, right, .. } => {
                    let merged: Vec<u64> = counts[*left]
                        .iter()
                        .zip(&counts[*right])
                        .map(|(a, b)| a + b)
                        .collect();
                    counts[id] = merged;
                }
            }
        }
        counts
    }
}

/// Hyperparameters accepted by [`fit_forest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means ⌈√d⌉.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

/// Parameters a forest was actually trained with, stored in its file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

/// Per-tree leaf ids reached by one instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LeafVector(pub Vec<u32>);

impl LeafVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedForest {
    trees: Vec<Tree>,
    n_classes: usize,
    feature_names: Vec<String>,
    train_params: TrainParams,
}

impl TrainedForest {
    /// Assembles a forest from existing trees, validating them against the
    /// declared class and feature counts.
    pub fn new(
        trees: Vec<Tree>,
        n_classes: usize,
        feature_names: Vec<String>,
        train_params: TrainParams,
    ) -> Result<Self> {
        let forest = Self {
            trees,
            n_classes,
            feature_names,
            train_params,
        };
        forest.validate()?;
        Ok(forest)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::CorruptPayload("forest has no trees".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::CorruptPayload("need at least 2 classes".into()));
        }
        let d = self.feature_names.len();
        for (t, tree) in self.trees.iter().enumerate() {
            tree.check_shape()?;
            for node in &tree.nodes {
                match node {
                    Node::Internal {
                        feature, threshold, ..
                    } => {
                        if *feature >= d {
                            return Err(Error::CorruptPayload(format!(
                                "tree {t} splits on feature {feature} but d = {d}"
                            )));
                        }
                        if !threshold.is_finite() {
                            return Err(Error::CorruptPayload(format!(
                                "tree {t} has a non-finite threshold"
                            )));
                        }
                    }
                    Node::Leaf { class_counts, .. } => {
                        if class_counts.len() != self.n_classes {
                            return Err(Error::CorruptPayload(format!(
                                "tree {t} leaf has {} counts, expected {}",
                                class_counts.len(),
                                self.n_classes
                            )));
                        }
                        if class_counts.iter().sum::<u64>() == 0 {
                            return Err(Error::CorruptPayload(format!("tree {t} has an empty leaf")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn train_params(&self) -> &TrainParams {
        &self.train_params
    }

    fn check_row(&self, x: &[Cell]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Mean over trees of the reached leaf's normalized class counts.
    pub fn predict_proba(&self, x: &[Cell]) -> Result<Vec<f64>> {
        self.check_row(x)?;
        let mut proba = vec![0.0; self.n_classes];
        for tree in &self.trees {
            if let Node::Leaf { class_counts, .. } = &tree.nodes[tree.route(x)] {
                let total = class_counts.iter().sum::<u64>() as f64;
                for (p, &c) in proba.iter_mut().zip(class_counts) {
                    *p += c as f64 / total;
                }
            }
        }
        let t = self.trees.len() as f64;
        proba.iter_mut().for_each(|p| *p /= t);
        Ok(proba)
    }

    /// Predicted label: argmax of [`predict_proba`](Self::predict_proba),
    /// ties to the lowest class index.
    pub fn predict(&self, x: &[Cell]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    pub fn predict_all(&self, ds: &Dataset) -> Result<Vec<usize>> {
        ds.rows().map(|x| self.predict(x)).collect()
    }

    pub fn leaf_assignment(&self, x: &[Cell]) -> Result<LeafVector> {
        self.check_row(x)?;
        Ok(LeafVector(self.trees.iter().map(|t| t.leaf_id(x)).collect()))
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Trains a bagged forest. Tree `t` draws all of its randomness from a
/// ChaCha8 stream keyed by `(seed, t)`, so the result does not depend on how
/// trees are scheduled across threads.
pub fn fit_forest(train: &Dataset, params: &ForestParams, seed: u64) -> Result<TrainedForest> {
    if params.n_trees == 0 {
        return Err(Error::InvalidParams("n_trees must be at least 1".into()));
    }
    if params.max_depth == 0 {
        return Err(Error::InvalidParams("max_depth must be at least 1".into()));
    }
    if params.min_leaf == 0 {
        return Err(Error::InvalidParams("min_leaf must be at least 1".into()));
    }
    let d = train.n_features();
    let features_per_split = match params.features_per_split {
        Some(0) => return Err(Error::InvalidParams("features_per_split must be at least 1".into())),
        Some(k) => k.min(d),
        None => ceil_sqrt(d),
    };
    let resolved = TrainParams {
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split,
        bootstrap: params.bootstrap,
        seed,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            grow_tree(train, &resolved, &mut rng)
        })
        .collect();
    Ok(TrainedForest {
        trees,
        n_classes: train.n_classes(),
        feature_names: train.feature_names().to_vec(),
        train_params: resolved,
    })
}

/// Smallest `k` with `k² ≥ d`.
pub fn ceil_sqrt(d: usize) -> usize {
    let mut k = (d as f64).sqrt() as usize;
    while k * k < d {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) >= d {
        k -= 1;
    }
    k.max(1)
}

fn grow_tree(ds: &Dataset, params: &TrainParams, rng: &mut ChaCha8Rng) -> Tree {
    let n = ds.n_rows();
    let samples: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut grower = Grower {
        ds,
        params,
        rng,
        nodes: Vec::new(),
        next_leaf: 0,
    };
    grower.grow(samples, 0);
    Tree {
        nodes: grower.nodes,
    }
}

struct Grower<'a> {
    ds: &'a Dataset,
    params: &'a TrainParams,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
    next_leaf: u32,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    missing_goes_left: bool,
}

impl Grower<'_> {
    fn class_counts(&self, samples: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.ds.n_classes()];
        for &i in samples {
            counts[self.ds.labels()[i]] += 1;
        }
        counts
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.class_counts(&samples);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if depth >= self.params.max_depth
            || pure
            || samples.len() < 2 * self.params.min_leaf
        {
            None
        } else {
            self.best_split(&samples)
        };

        let Some(split) = split else {
            self.nodes.push(Node::Leaf {
                leaf_id: self.next_leaf,
                class_counts: counts,
            });
            self.next_leaf += 1;
            return id;
        };

        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&i| match self.ds.cell(i, split.feature) {
                Some(v) => v <= split.threshold,
                None => split.missing_goes_left,
            });
        // placeholder until children ids are known
        self.nodes.push(Node::Leaf {
            leaf_id: u32::MAX,
            class_counts: Vec::new(),
        });
        let left_id = self.grow(left, depth + 1);
        let right_id = self.grow(right, depth + 1);
        self.nodes[id] = Node::Internal {
            feature: split.feature,
            threshold: split.threshold,
            missing_goes_left: split.missing_goes_left,
            left: left_id,
            right: right_id,
        };
        id
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<Split> {
        let d = self.ds.n_features();
        let mut candidates = sample(self.rng, d, self.params.features_per_split).into_vec();
        candidates.sort_unstable();

        let n_classes = self.ds.n_classes();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Split> = None;
        let mut values: Vec<(f64, usize)> = Vec::with_capacity(samples.len());

        for feature in candidates {
            values.clear();
            values.extend(samples.iter().filter_map(|&i| {
                self.ds.cell(i, feature).map(|v| (v, self.ds.labels()[i]))
            }));
            let total = values.len();
            if total < 2 * min_leaf {
                continue;
            }
            values.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut right_counts = vec![0u64; n_classes];
            for &(_, l) in &values {
                right_counts[l] += 1;
            }
            let parent = gini(&right_counts, total as u64);
            let mut left_counts = vec![0u64; n_classes];

            for k in 0..total - 1 {
                let label = values[k].1;
                left_counts[label] += 1;
                right_counts[label] -= 1;
                let n_left = k + 1;
                let n_right = total - n_left;
                let (lo, hi) = (values[k].0, values[k + 1].0);
                if lo == hi || n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let weighted = (n_left as f64 * gini(&left_counts, n_left as u64)
                    + n_right as f64 * gini(&right_counts, n_right as u64))
                    / total as f64;
                let gain = parent - weighted;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature,
                        threshold: midpoint(lo, hi),
                        gain,
                        missing_goes_left: n_left >= n_right,
                    });
                }
            }
        }
        best
    }
}

fn gini(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

/// Midpoint of two adjacent distinct values, guaranteed to satisfy
/// `lo <= m < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestFile {
    format_version: i64,
    n_classes: usize,
    feature_names: Vec<String>,
    trees: Vec<Tree>,
    train_params: TrainParams,
}

/// Serializes to the versioned JSON format.
pub fn save_forest(forest: &TrainedForest) -> Vec<u8> {
    let file = ForestFile {
        format_version: FORMAT_VERSION,
        n_classes: forest.n_classes,
        feature_names: forest.feature_names.clone(),
        trees: forest.trees.clone(),
        train_params: forest.train_params.clone(),
    };
    serde_json::to_vec(&file).expect("forest serializes")
}

pub fn load_forest(bytes: &[u8]) -> Result<TrainedForest> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::CorruptPayload("missing format_version".into()))?;
    let version = version
        .as_i64()
        .ok_or_else(|| Error::CorruptPayload("format_version is not an integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let file: ForestFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    TrainedForest::new(file.trees, file.n_classes, file.feature_names, file.train_params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 1..=20 {
            rows.push(vec![Some(-(i as f64))]);
            labels.push(0);
            rows.push(vec![Some(i as f64)]);
            labels.push(1);
        }
        Dataset::new(vec!["x".into()], rows, labels, vec!["neg".into(), "pos".into()]).unwrap()
    }

    fn params(n_trees: usize, max_depth: usize) -> ForestParams {
        ForestParams {
            n_trees,
            max_depth,
            ..ForestParams::default()
        }
    }

    fn stump_params() -> TrainParams {
        TrainParams {
            n_trees: 1,
            max_depth: 1,
            min_leaf: 1,
            features_per_split: 1,
            bootstrap: false,
            seed: 0,
        }
    }

    #[test]
    fn separable_single_split() {
        let ds = separable();
        let forest = fit_forest(&ds, &params(1, 2), 3).unwrap();
        let tree = &forest.trees()[0];
        assert_eq!(tree.n_leaves(), 2);
        let acc = ds
            .rows()
            .zip(ds.labels())
            .filter(|(x, &y)| forest.predict(x).unwrap() == y)
            .count();
        assert_eq!(acc, ds.n_rows());
    }

    #[test]
    fn deterministic_bytes() {
        let ds = crate::synthetic::blobs2(1);
        let a = save_forest(&fit_forest(&ds, &params(5, 4), 9).unwrap());
        let b = save_forest(&fit_forest(&ds, &params(5, 4), 9).unwrap());
        assert_eq!(a, b);
        let c = save_forest(&fit_forest(&ds, &params(5, 4), 10).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_params() {
        let ds = separable();
        assert!(matches!(fit_forest(&ds, &params(0, 3), 0), Err(Error::InvalidParams(_))));
        assert!(matches!(fit_forest(&ds, &params(3, 0), 0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn leaf_normalization_and_averaging() {
        let leaf = |id, c: Vec<u64>| Node::Leaf {
            leaf_id: id,
            class_counts: c,
        };
        let one = Tree::new(vec![leaf(0, vec![9, 1])]).unwrap();
        let forest = TrainedForest::new(vec![one], 2, vec!["a".into()], stump_params()).unwrap();
        assert_eq!(forest.predict_proba(&[Some(0.0)]).unwrap(), vec![0.9, 0.1]);

        let a = Tree::new(vec![leaf(0, vec![3, 0])]).unwrap();
        let b = Tree::new(vec![leaf(0, vec![0, 5])]).unwrap();
        let forest = TrainedForest::new(vec![a, b], 2, vec!["a".into()], stump_params()).unwrap();
        assert_eq!(forest.predict_proba(&[None]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(forest.leaf_assignment(&[Some(1e9)]).unwrap(), LeafVector(vec![0, 0]));
    }

    #[test]
    fn dimension_mismatch() {
        let forest = fit_forest(&separable(), &params(1, 2), 0).unwrap();
        assert!(matches!(
            forest.predict_proba(&[Some(1.0), Some(2.0)]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(forest.leaf_assignment(&[]).is_err());
    }

    #[test]
    fn hand_written_stump_fixture() {
        let json = r#"{
            "format_version": 1,
            "n_classes": 2,
            "feature_names": ["a", "b"],
            "trees": [{"nodes": [
                {"kind": "internal", "feature": 1, "threshold": 0.5, "missing_goes_left": false, "left": 1, "right": 2},
                {"kind": "leaf", "leaf_id": 0, "class_counts": [3, 1]},
                {"kind": "leaf", "leaf_id": 1, "class_counts": [1, 4]}
            ]}],
            "train_params": {"n_trees": 1, "max_depth": 1, "min_leaf": 1, "features_per_split": 2, "bootstrap": false, "seed": 0}
        }"#;
        let forest = load_forest(json.as_bytes()).unwrap();
        assert_eq!(forest.predict_proba(&[Some(9.0), Some(0.5)]).unwrap(), vec![0.75, 0.25]);
        assert_eq!(forest.predict_proba(&[Some(9.0), Some(0.6)]).unwrap(), vec![0.2, 0.8]);
        assert_eq!(forest.predict_proba(&[None, None]).unwrap(), vec![0.2, 0.8]);
        assert_eq!(forest.leaf_assignment(&[None, Some(-1.0)]).unwrap(), LeafVector(vec![0]));
        assert_eq!(forest.trees()[0].node_counts(2)[0], vec![4, 5]);
    }

    #[test]
    fn version_and_corruption() {
        let ds = separable();
        let bytes = save_forest(&fit_forest(&ds, &params(2, 2), 0).unwrap());
        let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        value["format_version"] = 2.into();
        assert!(matches!(
            load_forest(&serde_json::to_vec(&value).unwrap()),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
        assert!(matches!(load_forest(b"{not json"), Err(Error::CorruptPayload(_))));
        value["format_version"] = 1.into();
        value["trees"][0]["nodes"][0]["left"] = 999.into();
        assert!(matches!(
            load_forest(&serde_json::to_vec(&value).unwrap()),
            Err(Error::CorruptPayload(_))
        ));
    }

    #[test]
    fn cyclic_tree_rejected() {
        let nodes = vec![Node::Internal {
            feature: 0,
            threshold: 0.0,
            missing_goes_left: true,
            left: 0,
            right: 0,
        }];
        assert!(Tree::new(nodes).is_err());
    }

    #[test]
    fn ceil_sqrt_values() {
        let got: Vec<usize> = [1, 2, 4, 5, 8, 9, 10, 30].iter().map(|&d| ceil_sqrt(d)).collect();
        assert_eq!(got, vec![1, 2, 2, 3, 3, 3, 4, 6]);
    }

    #[test]
    fn midpoint_stays_below_upper() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }

    #[test]
    fn missing_direction_follows_majority() {
        // 6 present rows: 4 low (class 0), 2 high (class 1); one missing row.
        let rows = vec![
            vec![Some(0.0)],
            vec![Some(0.1)],
            vec![Some(0.2)],
            vec![Some(0.3)],
            vec![Some(5.0)],
            vec![Some(5.1)],
            vec![None],
        ];
        let ds = Dataset::new(
            vec!["x".into()],
            rows,
            vec![0, 0, 0, 0, 1, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let p = ForestParams {
            n_trees: 1,
            max_depth: 1,
            bootstrap: false,
            ..ForestParams::default()
        };
        let forest = fit_forest(&ds, &p, 0).unwrap();
        match &forest.trees()[0].nodes()[0] {
            Node::Internal {
                missing_goes_left,
                threshold,
                ..
            } => {
                assert!(*missing_goes_left);
                assert!((threshold - 2.65).abs() < 1e-12);
            }
            other => panic!("expected split, got {other:?}"),
        }
        // the missing row lands in the left leaf and is counted there
        assert_eq!(forest.trees()[0].node_counts(2)[1], vec![4, 1]);
    }
}
