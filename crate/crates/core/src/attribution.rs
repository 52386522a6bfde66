//! Per-instance feature attributions for the forest's predicted class.
//!
//! [`Estimator::Saabas`] credits each split on an instance's decision path
//! with the change in node-mean class probability. It is exact in the sense
//! that bias plus attributions reproduces the predicted probability.
//! [`Estimator::ShapleyOracle`] enumerates all feature subsets against a
//! background sample and is only usable for small `d`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::forest::{argmax, TrainedForest};

/// Largest feature count accepted by the subset-enumeration oracle.
pub const MAX_SHAPLEY_FEATURES: usize = 12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Saabas,
    ShapleyOracle,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Saabas => "saabas",
            Estimator::ShapleyOracle => "shapley_oracle",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saabas" => Ok(Estimator::Saabas),
            "shapley_oracle" => Ok(Estimator::ShapleyOracle),
            other => Err(Error::InvalidParams(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub phi: Vec<f64>,
    pub bias: f64,
    pub target_class: usize,
    pub estimator: Estimator,
}

/// Per-tree, per-node mean class probabilities, shared across many
/// Saabas evaluations on the same forest.
#[derive(Debug, Clone)]
pub struct NodeMeans {
    // means[t][node * n_classes + class]
    means: Vec<Vec<f64>>,
    n_classes: usize,
}

impl NodeMeans {
    pub fn new(forest: &TrainedForest) -> Self {
        let n_classes = forest.n_classes();
        let means = forest
            .trees()
            .iter()
            .map(|tree| {
                tree.node_counts(n_classes)
                    .iter()
                    .flat_map(|counts| {
                        let total = counts.iter().sum::<u64>() as f64;
                        counts.iter().map(move |&c| c as f64 / total)
                    })
                    .collect()
            })
            .collect();
        Self { means, n_classes }
    }

    fn mean(&self, tree: usize, node: usize, class: usize) -> f64 {
        self.means[tree][node * self.n_classes + class]
    }
}

fn check_inputs(forest: &TrainedForest, x: &[Cell], target_class: usize) -> Result<()> {
    if x.len() != forest.n_features() {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features(),
            got: x.len(),
        });
    }
    if target_class >= forest.n_classes() {
        return Err(Error::IndexOutOfRange {
            index: target_class,
            len: forest.n_classes(),
        });
    }
    Ok(())
}

/// Path attribution for `target_class`.
pub fn saabas_attribution(
    forest: &TrainedForest,
    x: &[Cell],
    target_class: usize,
) -> Result<AttributionVector> {
    saabas_with(forest, &NodeMeans::new(forest), x, target_class)
}

/// Like [`saabas_attribution`] with precomputed node means.
pub fn saabas_with(
    forest: &TrainedForest,
    means: &NodeMeans,
    x: &[Cell],
    target_class: usize,
) -> Result<AttributionVector> {
    check_inputs(forest, x, target_class)?;
    let mut phi = vec![0.0; forest.n_features()];
    let mut bias = 0.0;
    for (t, tree) in forest.trees().iter().enumerate() {
        let path = tree.path(x);
        bias += means.mean(t, path[0], target_class);
        for step in path.windows(2) {
            let (parent, child) = (step[0], step[1]);
            if let crate::forest::Node::Internal { feature, .. } = tree.nodes()[parent] {
                phi[feature] +=
                    means.mean(t, child, target_class) - means.mean(t, parent, target_class);
            }
        }
    }
    let n_trees = forest.n_trees() as f64;
    phi.iter_mut().for_each(|p| *p /= n_trees);
    Ok(AttributionVector {
        phi,
        bias: bias / n_trees,
        target_class,
        estimator: Estimator::Saabas,
    })
}

/// Exact interventional Shapley values by enumerating all `2^d` subsets:
/// `v(S)` is the mean predicted probability of `target_class` over
/// background rows with the features in `S` taken from `x`.
pub fn shapley_bruteforce(
    forest: &TrainedForest,
    x: &[Cell],
    background: &Dataset,
    target_class: usize,
) -> Result<AttributionVector> {
    let rows: Vec<&[Cell]> = background.rows().collect();
    shapley_bruteforce_rows(forest, x, &rows, target_class)
}

pub fn shapley_bruteforce_rows(
    forest: &TrainedForest,
    x: &[Cell],
    background: &[&[Cell]],
    target_class: usize,
) -> Result<AttributionVector> {
    check_inputs(forest, x, target_class)?;
    let d = forest.n_features();
    if d > MAX_SHAPLEY_FEATURES {
        return Err(Error::TooManyFeatures {
            got: d,
            max: MAX_SHAPLEY_FEATURES,
        });
    }
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    if let Some(b) = background.iter().find(|b| b.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.len(),
        });
    }

    let values: Vec<f64> = (0..1usize << d)
        .into_par_iter()
        .map(|mask| {
            let mut z = vec![None; d];
            let mut total = 0.0;
            for b in background {
                for j in 0..d {
                    z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                }
                total += forest.predict_proba(&z).expect("row length checked")[target_class];
            }
            total / background.len() as f64
        })
        .collect();

    // weight[s] = s! (d - s - 1)! / d!
    let weights: Vec<f64> = (0..d)
        .map(|s| {
            let mut w = 1.0 / d as f64;
            // 1 / (d * C(d-1, s))
            let mut binom = 1.0;
            for k in 0..s {
                binom = binom * (d - 1 - k) as f64 / (k + 1) as f64;
            }
            w /= binom;
            w
        })
        .collect();

    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..1usize << d {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            *p += weights[s] * (values[mask | bit] - values[mask]);
        }
    }
    Ok(AttributionVector {
        phi,
        bias: values[0],
        target_class,
        estimator: Estimator::ShapleyOracle,
    })
}

/// Attributions for every row of a dataset, each for the row's own predicted
/// class.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    n_features: usize,
    phi: Vec<f64>,
    pub bias: Vec<f64>,
    pub target_class: Vec<usize>,
    pub estimator: Estimator,
}

impl AttributionMatrix {
    pub fn n_rows(&self) -> usize {
        self.bias.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.phi[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.phi.chunks_exact(self.n_features)
    }

    pub fn vector(&self, i: usize) -> AttributionVector {
        AttributionVector {
            phi: self.row(i).to_vec(),
            bias: self.bias[i],
            target_class: self.target_class[i],
            estimator: self.estimator,
        }
    }

    /// CSV with one column per feature, then `bias` and `class`.
    pub fn write_csv<W: Write>(&self, feature_names: &[String], writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::InvalidParams(e.to_string());
        let mut header: Vec<String> = feature_names.to_vec();
        header.push("bias".into());
        header.push("class".into());
        wtr.write_record(&header).map_err(to_err)?;
        for i in 0..self.n_rows() {
            let mut record: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            record.push(self.bias[i].to_string());
            record.push(self.target_class[i].to_string());
            wtr.write_record(&record).map_err(to_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv stream>", e))
    }
}

/// Bundles a forest with an estimator (and its background sample, for the
/// Shapley oracle) to attribute rows for their own predicted class.
pub struct Attributor<'a> {
    forest: &'a TrainedForest,
    estimator: Estimator,
    means: NodeMeans,
    background: Vec<&'a [Cell]>,
}

impl<'a> Attributor<'a> {
    pub fn new(
        forest: &'a TrainedForest,
        estimator: Estimator,
        background: Option<&'a Dataset>,
    ) -> Result<Self> {
        if estimator == Estimator::ShapleyOracle {
            if forest.n_features() > MAX_SHAPLEY_FEATURES {
                return Err(Error::TooManyFeatures {
                    got: forest.n_features(),
                    max: MAX_SHAPLEY_FEATURES,
                });
            }
            if background.is_none() {
                return Err(Error::EmptyBackground);
            }
        }
        Ok(Self {
            forest,
            estimator,
            means: NodeMeans::new(forest),
            background: background.map(|b| b.rows().collect()).unwrap_or_default(),
        })
    }

    pub fn forest(&self) -> &TrainedForest {
        self.forest
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    /// Attribution of `x` for `target_class`.
    pub fn attribute_for(&self, x: &[Cell], target_class: usize) -> Result<AttributionVector> {
        match self.estimator {
            Estimator::Saabas => saabas_with(self.forest, &self.means, x, target_class),
            Estimator::ShapleyOracle => {
                shapley_bruteforce_rows(self.forest, x, &self.background, target_class)
            }
        }
    }

    /// Attribution of `x` for its own predicted class.
    pub fn attribute(&self, x: &[Cell]) -> Result<AttributionVector> {
        let target = argmax(&self.forest.predict_proba(x)?);
        self.attribute_for(x, target)
    }

    pub fn matrix(&self, ds: &Dataset) -> Result<AttributionMatrix> {
        if ds.n_features() != self.forest.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.forest.n_features(),
                got: ds.n_features(),
            });
        }
        let rows: Vec<&[Cell]> = ds.rows().collect();
        let vectors: Vec<AttributionVector> = rows
            .par_iter()
            .map(|x| self.attribute(x))
            .collect::<Result<_>>()?;

        let n_features = self.forest.n_features();
        let mut phi = Vec::with_capacity(vectors.len() * n_features);
        let mut bias = Vec::with_capacity(vectors.len());
        let mut target_class = Vec::with_capacity(vectors.len());
        for v in vectors {
            phi.extend_from_slice(&v.phi);
            bias.push(v.bias);
            target_class.push(v.target_class);
        }
        Ok(AttributionMatrix {
            n_features,
            phi,
            bias,
            target_class,
            estimator: self.estimator,
        })
    }
}

/// Attribution matrix with the dataset itself as the Shapley background.
pub fn attribution_matrix(
    forest: &TrainedForest,
    ds: &Dataset,
    estimator: Estimator,
) -> Result<AttributionMatrix> {
    Attributor::new(forest, estimator, Some(ds))?.matrix(ds)
}

pub fn attribution_matrix_with_background(
    forest: &TrainedForest,
    ds: &Dataset,
    estimator: Estimator,
    background: &Dataset,
) -> Result<AttributionMatrix> {
    Attributor::new(forest, estimator, Some(background))?.matrix(ds)
}
