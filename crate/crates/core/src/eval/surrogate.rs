//! 1-NN prototype surrogate and its fidelity to the black box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::forest::{LeafVector, TrainedForest};
use crate::proximity::tree_distance;
use crate::selection::PrototypeSet;

/// Nearest prototype of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nearest {
    /// Position in the prototype set's selection order.
    pub position: usize,
    /// Training-row index of the prototype.
    pub index: usize,
    pub label: usize,
    pub distance: f64,
}

/// Prototype leaf vectors cached once so every query costs `|P| · T`.
pub struct Surrogate<'a> {
    forest: &'a TrainedForest,
    prototypes: &'a PrototypeSet,
    leaves: Vec<LeafVector>,
}

impl<'a> Surrogate<'a> {
    pub fn new(forest: &'a TrainedForest, prototypes: &'a PrototypeSet, train: &Dataset) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(Error::EmptyPrototypeSet);
        }
        if prototypes.labels.len() != prototypes.indices.len() {
            return Err(Error::LengthMismatch {
                left: prototypes.indices.len(),
                right: prototypes.labels.len(),
            });
        }
        let leaves = prototypes
            .indices
            .iter()
            .map(|&i| {
                if i >= train.n_rows() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        len: train.n_rows(),
                    });
                }
                forest.leaf_assignment(train.row(i))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            forest,
            prototypes,
            leaves,
        })
    }

    pub fn prototypes(&self) -> &PrototypeSet {
        self.prototypes
    }

    /// Ties go to the earlier prototype in selection order.
    pub fn nearest(&self, x: &[Cell]) -> Result<Nearest> {
        let lx = self.forest.leaf_assignment(x)?;
        let mut best: Option<(usize, f64)> = None;
        for (pos, lp) in self.leaves.iter().enumerate() {
            let d = tree_distance(&lx, lp)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((pos, d));
            }
        }
        let (position, distance) = best.expect("prototype set is non-empty");
        Ok(Nearest {
            position,
            index: self.prototypes.indices[position],
            label: self.prototypes.labels[position],
            distance,
        })
    }

    pub fn predict(&self, x: &[Cell]) -> Result<usize> {
        Ok(self.nearest(x)?.label)
    }

    pub fn predict_all(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let rows: Vec<_> = ds.rows().collect();
        rows.par_iter().map(|x| self.predict(x)).collect()
    }
}

pub fn surrogate_predict(
    prototypes: &PrototypeSet,
    forest: &TrainedForest,
    train: &Dataset,
    x: &[Cell],
) -> Result<Nearest> {
    Surrogate::new(forest, prototypes, train)?.nearest(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub method: String,
    pub fidelity: f64,
    /// Prototype count, or a comparable size measure for baselines.
    pub model_size: usize,
    pub n_test: usize,
    pub agreements: usize,
    /// Indexed by black-box class: test rows the black box put in the class.
    pub per_class_total: Vec<usize>,
    /// Indexed by black-box class: how many of those the surrogate matched.
    pub per_class_agreement: Vec<usize>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

/// Agreement between reference predictions and a surrogate's predictions.
pub fn agreement_report(
    method: &str,
    model_size: usize,
    reference: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<FidelityReport> {
    if reference.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if reference.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: predicted.len(),
        });
    }
    let mut per_class_total = vec![0; n_classes];
    let mut per_class_agreement = vec![0; n_classes];
    for (&r, &p) in reference.iter().zip(predicted) {
        if r >= n_classes {
            return Err(Error::IndexOutOfRange {
                index: r,
                len: n_classes,
            });
        }
        per_class_total[r] += 1;
        if r == p {
            per_class_agreement[r] += 1;
        }
    }
    let agreements: usize = per_class_agreement.iter().sum();
    Ok(FidelityReport {
        method: method.to_string(),
        fidelity: agreements as f64 / reference.len() as f64,
        model_size,
        n_test: reference.len(),
        agreements,
        per_class_total,
        per_class_agreement,
        config: serde_json::Value::Null,
    })
}

/// Fraction of test rows where the prototype surrogate reproduces the
/// forest's own prediction.
pub fn fidelity(
    prototypes: &PrototypeSet,
    forest: &TrainedForest,
    train: &Dataset,
    test: &Dataset,
) -> Result<FidelityReport> {
    if test.n_rows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    let surrogate = Surrogate::new(forest, prototypes, train)?;
    let black_box = forest.predict_all(test)?;
    let predicted = surrogate.predict_all(test)?;
    agreement_report("prototypes", prototypes.len(), &black_box, &predicted, forest.n_classes())
}
