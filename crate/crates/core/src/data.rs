//! Tabular datasets: CSV ingestion, label encoding, stratified splitting and
//! mean imputation.
//!
//! A cell is either a finite `f64` or [`MISSING`]. The marker survives
//! ingestion untouched so the forest can route missing values natively; only
//! the interpretable baselines impute.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One feature value. `None` is the missing marker.
pub type Cell = Option<f64>;

/// The distinguished missing-value marker.
pub const MISSING: Cell = None;

/// An immutable n×d table of cells with encoded class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    cells: Vec<Cell>,
    labels: Vec<usize>,
    label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row vectors, validating every invariant.
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<Cell>>,
        labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let d = feature_names.len();
        let mut cells = Vec::with_capacity(rows.len() * d);
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            cells.extend_from_slice(row);
        }
        Self::from_flat(feature_names, cells, labels, label_names)
    }

    /// Builds a dataset from a row-major cell buffer.
    pub fn from_flat(
        feature_names: Vec<String>,
        cells: Vec<Cell>,
        labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::EmptyDataset("no feature columns".into()));
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset("no rows".into()));
        }
        if label_names.len() < 2 {
            return Err(Error::EmptyDataset(format!(
                "need at least 2 classes, found {}",
                label_names.len()
            )));
        }
        if cells.len() != labels.len() * d {
            return Err(Error::LengthMismatch {
                left: cells.len(),
                right: labels.len() * d,
            });
        }
        if let Some(v) = cells.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite cell value {v}")));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::IndexOutOfRange {
                index: l,
                len: label_names.len(),
            });
        }
        Ok(Self {
            feature_names,
            cells,
            labels,
            label_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        let d = self.n_features();
        &self.cells[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Cell]> + '_ {
        self.cells.chunks_exact(self.n_features())
    }

    pub fn cell(&self, row: usize, feature: usize) -> Cell {
        self.cells[row * self.n_features() + feature]
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Row count per class index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Label names are kept so class
    /// indices stay comparable with the source.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let d = self.n_features();
        let mut cells = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n_rows(),
                });
            }
            cells.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(
            self.feature_names.clone(),
            cells,
            labels,
            self.label_names.clone(),
        )
    }

    /// Same rows with a replacement label vector (e.g. black-box predictions).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_rows() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: self.n_rows(),
            });
        }
        Self::from_flat(
            self.feature_names.clone(),
            self.cells.clone(),
            labels,
            self.label_names.clone(),
        )
    }
}

/// Reads a CSV file. See [`read_csv`].
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    missing_tokens: &[String],
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column, missing_tokens)
}

/// Parses CSV with a header row. The label column is removed from the
/// features and its values are encoded in first-appearance order. Empty cells
/// and cells equal to any of `missing_tokens` become [`MISSING`].
pub fn read_csv<R: Read>(
    reader: R,
    label_column: &str,
    missing_tokens: &[String],
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let label_pos = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::UnknownLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_pos)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut cells = Vec::new();
    let mut labels = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();

    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, raw) in record.iter().enumerate() {
            if i == label_pos {
                if raw.is_empty() {
                    return Err(Error::MalformedCsv {
                        line,
                        reason: "empty label".into(),
                    });
                }
                let next = label_names.len();
                let idx = *label_index.entry(raw.to_string()).or_insert_with(|| {
                    label_names.push(raw.to_string());
                    next
                });
                labels.push(idx);
                continue;
            }
            if raw.is_empty() || missing_tokens.iter().any(|t| t == raw) {
                cells.push(MISSING);
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(Some(v)),
                _ => {
                    return Err(Error::MalformedCsv {
                        line,
                        reason: format!("unparseable numeric cell `{raw}` in column {}", header.get(i).unwrap_or("?")),
                    })
                }
            }
        }
    }

    if labels.is_empty() {
        return Err(Error::EmptyDataset("no data rows".into()));
    }
    if label_names.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "label column `{label_column}` has {} distinct value(s), need at least 2",
            label_names.len()
        )));
    }
    Dataset::from_flat(feature_names, cells, labels, label_names)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::MalformedCsv {
            line,
            reason: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Io(io) => Error::io("<csv stream>", io),
        other => Error::MalformedCsv {
            line,
            reason: format!("{other:?}"),
        },
    }
}

/// Writes the dataset as CSV with the label column last. Missing cells are
/// written empty. Floats use the shortest round-trip representation, so
/// reading the output back reproduces the dataset exactly as long as labels
/// first appear in index order.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W, label_column: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(label_column);
    wtr.write_record(&header).map_err(csv_error)?;
    let mut record: Vec<String> = Vec::with_capacity(ds.n_features() + 1);
    for (row, &label) in ds.rows().zip(ds.labels()) {
        record.clear();
        record.extend(row.iter().map(|c| match c {
            Some(v) => v.to_string(),
            None => String::new(),
        }));
        record.push(ds.label_names()[label].clone());
        wtr.write_record(&record).map_err(csv_error)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv stream>", e))?;
    Ok(())
}

/// Train/test partition of a source dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    /// Source row indices of `train`, ascending.
    pub train_indices: Vec<usize>,
    /// Source row indices of `test`, ascending.
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Number of test rows drawn from a class of `class_count` rows.
pub fn stratum_test_size(class_count: usize, test_fraction: f64) -> usize {
    let raw = (class_count as f64 * test_fraction).round() as usize;
    raw.clamp(1, class_count - 1)
}

/// Deterministic stratified split. Every class present in `ds` contributes
/// `round(count × test_fraction)` rows to the test side, clamped so both
/// sides keep at least one row of it.
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParams(format!(
            "test_fraction must lie in (0,1), got {test_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() == 1 {
            return Err(Error::ClassTooSmall {
                class,
                count: 1,
                required: 2,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_indices = Vec::new();
    let mut train_indices = Vec::new();
    for mut members in by_class.into_iter().filter(|m| !m.is_empty()) {
        let t = stratum_test_size(members.len(), test_fraction);
        members.shuffle(&mut rng);
        test_indices.extend_from_slice(&members[..t]);
        train_indices.extend_from_slice(&members[t..]);
    }
    test_indices.sort_unstable();
    train_indices.sort_unstable();

    Ok(SplitPair {
        train: ds.subset(&train_indices)?,
        test: ds.subset(&test_indices)?,
        train_indices,
        test_indices,
        seed,
    })
}

/// Replaces every missing cell with its column mean over present values;
/// columns with no present value impute to 0.
pub fn mean_impute(ds: &Dataset) -> Dataset {
    impute_with(ds, &column_means(ds))
}

/// Per-feature mean over non-missing cells; 0 for an all-missing column.
pub fn column_means(ds: &Dataset) -> Vec<f64> {
    let d = ds.n_features();
    let mut sums = vec![0.0; d];
    let mut counts = vec![0usize; d];
    for row in ds.rows() {
        for (j, c) in row.iter().enumerate() {
            if let Some(v) = c {
                sums[j] += v;
                counts[j] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Replaces every MISSING cell of column `j` with `means[j]`.
pub fn impute_with(ds: &Dataset, means: &[f64]) -> Dataset {
    let cells = ds
        .rows()
        .flat_map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, c)| Some(c.unwrap_or(means[j])))
                .collect::<Vec<_>>()
        })
        .collect();
    Dataset {
        feature_names: ds.feature_names.clone(),
        cells,
        labels: ds.labels.clone(),
        label_names: ds.label_names.clone(),
    }
}
