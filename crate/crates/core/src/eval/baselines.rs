//! Interpretable proxy models trained on the black box's own labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{column_means, impute_with, Dataset};
use crate::error::{Error, Result};
use crate::eval::surrogate::{agreement_report, FidelityReport};
use crate::forest::{argmax, fit_forest, ForestParams};

pub const NB_VARIANCE_FLOOR: f64 = 1e-9;
pub const LR_L2: f64 = 1e-4;
pub const LR_GRAD_TOL: f64 = 1e-6;
pub const LR_MAX_ITER: usize = 10_000;
pub const DT_MAX_DEPTH: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    NaiveBayes,
    LogisticRegression,
    DecisionTree,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::NaiveBayes,
        BaselineKind::LogisticRegression,
        BaselineKind::DecisionTree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::NaiveBayes => "naive_bayes",
            BaselineKind::LogisticRegression => "logistic_regression",
            BaselineKind::DecisionTree => "decision_tree",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown baseline `{s}`")))
    }
}

/// Dense imputed matrix, row-major.
struct Matrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn from_imputed(ds: &Dataset) -> Self {
        let data = ds
            .rows()
            .flat_map(|r| r.iter().map(|c| c.expect("imputed")))
            .collect();
        Self {
            n: ds.n_rows(),
            d: ds.n_features(),
            data,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

pub struct GaussianNb {
    log_prior: Vec<f64>,
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

impl GaussianNb {
    fn fit(x: &Matrix, y: &[usize], n_classes: usize) -> Self {
        let mut count = vec![0usize; n_classes];
        let mut mean = vec![vec![0.0; x.d]; n_classes];
        for i in 0..x.n {
            count[y[i]] += 1;
            for (m, v) in mean[y[i]].iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for (m, &c) in mean.iter_mut().zip(&count) {
            m.iter_mut().for_each(|v| *v /= c as f64);
        }
        let mut var = vec![vec![0.0; x.d]; n_classes];
        for (i, &c) in y.iter().enumerate() {
            for j in 0..x.d {
                let e = x.row(i)[j] - mean[c][j];
                var[c][j] += e * e;
            }
        }
        for (v, &c) in var.iter_mut().zip(&count) {
            v.iter_mut()
                .for_each(|s| *s = (*s / c as f64).max(NB_VARIANCE_FLOOR));
        }
        let log_prior = count
            .iter()
            .map(|&c| (c as f64 / x.n as f64).ln())
            .collect();
        Self {
            log_prior,
            mean,
            var,
        }
    }

    fn predict(&self, x: &[f64]) -> usize {
        let scores: Vec<f64> = (0..self.log_prior.len())
            .map(|c| {
                let ll: f64 = x
                    .iter()
                    .zip(&self.mean[c])
                    .zip(&self.var[c])
                    .map(|((&v, &m), &s)| {
                        -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - m) * (v - m) / s)
                    })
                    .sum();
                self.log_prior[c] + ll
            })
            .collect();
        argmax(&scores)
    }
}

/// Multinomial logistic regression on standardized features, fitted by
/// full-batch gradient descent on the L2-penalized mean cross-entropy.
pub struct LogisticRegression {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    /// `n_classes × (d + 1)`, bias last.
    weights: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl LogisticRegression {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mu)
            .zip(&self.sigma)
            .map(|((&v, &m), &s)| (v - m) / s)
            .chain(std::iter::once(1.0))
            .collect()
    }

    fn fit(x: &Matrix, y: &[usize], n_classes: usize) -> Self {
        let (n, d) = (x.n, x.d);
        let mut mu = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mu.iter_mut().zip(x.row(i)) {
                *m += v / n as f64;
            }
        }
        let mut sigma = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                let e = x.row(i)[j] - mu[j];
                sigma[j] += e * e / n as f64;
            }
        }
        sigma
            .iter_mut()
            .for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        let mut model = Self {
            mu,
            sigma,
            weights: vec![vec![0.0; d + 1]; n_classes],
            iterations: 0,
        };
        let z: Vec<Vec<f64>> = (0..n).map(|i| model.standardize(x.row(i))).collect();
        let mean_sq = z.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n as f64;
        let lr = 1.0 / (0.5 * mean_sq + LR_L2);

        let mut grad = vec![vec![0.0; d + 1]; n_classes];
        for iter in 0..LR_MAX_ITER {
            grad.iter_mut().for_each(|g| g.fill(0.0));
            for (zi, &yi) in z.iter().zip(y) {
                let p = softmax(&model.logits(zi));
                for c in 0..n_classes {
                    let r = p[c] - if c == yi { 1.0 } else { 0.0 };
                    for (g, v) in grad[c].iter_mut().zip(zi) {
                        *g += r * v / n as f64;
                    }
                }
            }
            for (g, w) in grad.iter_mut().zip(&model.weights) {
                for j in 0..d {
                    g[j] += LR_L2 * w[j];
                }
            }
            let norm = grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
            model.iterations = iter;
            if norm < LR_GRAD_TOL {
                break;
            }
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                for (wj, gj) in w.iter_mut().zip(g) {
                    *wj -= lr * gj;
                }
            }
            model.iterations = iter + 1;
        }
        model
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(&self.standardize(x)))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Trains `kind` on `train` and reports its agreement with `test`'s labels.
/// Both datasets must carry the black box's predictions as labels; missing
/// cells are filled with the training column means.
pub fn baseline_fit_predict(kind: BaselineKind, train: &Dataset, test: &Dataset) -> Result<FidelityReport> {
    if test.n_rows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    if train.n_features() != test.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            got: test.n_features(),
        });
    }
    let n_classes = train.n_classes();
    if let Some(c) = train.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass(c));
    }
    let means = column_means(train);
    let train = impute_with(train, &means);
    let test = impute_with(test, &means);
    let xtr = Matrix::from_imputed(&train);
    let xte = Matrix::from_imputed(&test);
    let y = train.labels();

    let (predicted, model_size): (Vec<usize>, usize) = match kind {
        BaselineKind::NaiveBayes => {
            let m = GaussianNb::fit(&xtr, y, n_classes);
            ((0..xte.n).map(|i| m.predict(xte.row(i))).collect(), 2 * n_classes * xtr.d)
        }
        BaselineKind::LogisticRegression => {
            let m = LogisticRegression::fit(&xtr, y, n_classes);
            log::debug!("logistic regression stopped after {} iterations", m.iterations);
            (
                (0..xte.n).map(|i| m.predict(xte.row(i))).collect(),
                n_classes * (xtr.d + 1),
            )
        }
        BaselineKind::DecisionTree => {
            let params = ForestParams {
                n_trees: 1,
                max_depth: DT_MAX_DEPTH,
                min_leaf: 1,
                features_per_split: Some(xtr.d),
                bootstrap: false,
            };
            let tree = fit_forest(&train, &params, 0)?;
            let size = tree.trees()[0].n_leaves();
            (tree.predict_all(&test)?, size)
        }
    };
    agreement_report(kind.as_str(), model_size, test.labels(), &predicted, n_classes)
}
