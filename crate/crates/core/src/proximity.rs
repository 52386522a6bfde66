//! Tree-space distance: one minus the fraction of trees in which two
//! instances reach the same leaf.

use std::io::Write;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{LeafVector, TrainedForest};

pub fn tree_distance(a: &LeafVector, b: &LeafVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("leaf vectors have no trees".into()));
    }
    Ok(distance_unchecked(a, b))
}

fn distance_unchecked(a: &LeafVector, b: &LeafVector) -> f64 {
    let t = a.len();
    let agree = a.0.iter().zip(&b.0).filter(|(x, y)| x == y).count();
    (t - agree) as f64 / t as f64
}

/// Leaf vectors of every row, in row order.
pub fn leaf_vectors(forest: &TrainedForest, ds: &Dataset) -> Result<Vec<LeafVector>> {
    let rows: Vec<_> = ds.rows().collect();
    rows.par_iter().map(|x| forest.leaf_assignment(x)).collect()
}

/// Dense symmetric n×n distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Pairwise distances between precomputed leaf vectors.
    pub fn from_leaf_vectors(leaves: &[LeafVector]) -> Result<Self> {
        let n = leaves.len();
        if n == 0 {
            return Err(Error::EmptyInput("no instances".into()));
        }
        let t = leaves[0].len();
        if t == 0 {
            return Err(Error::EmptyInput("leaf vectors have no trees".into()));
        }
        if let Some(bad) = leaves.iter().find(|l| l.len() != t) {
            return Err(Error::LengthMismatch {
                left: t,
                right: bad.len(),
            });
        }
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j {
                    *cell = distance_unchecked(&leaves[i], &leaves[j]);
                }
            }
        });
        Ok(Self { n, data })
    }

    /// Wraps an explicit matrix after checking symmetry, zero diagonal and
    /// the [0,1] range.
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("no instances".into()));
        }
        if data.len() != n * n {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: n * n,
            });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidParams(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !(0.0..=1.0).contains(&v) || v != data[j * n + i] {
                    return Err(Error::InvalidParams(format!(
                        "entry ({i},{j}) breaks symmetry or range"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for i in 0..self.n {
            wtr.write_record(self.row(i).iter().map(f64::to_string))
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::io("<csv stream>", e))
    }
}

/// Leaf vectors are computed once per row, then compared pairwise.
pub fn distance_matrix(forest: &TrainedForest, ds: &Dataset) -> Result<DistanceMatrix> {
    DistanceMatrix::from_leaf_vectors(&leaf_vectors(forest, ds)?)
}
