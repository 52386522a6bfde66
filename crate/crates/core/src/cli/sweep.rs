//! Exhaustive grid over selection and alike-part settings.
//!
//! Every cell is written to its own JSON file as soon as it finishes; a
//! rerun reuses any cell file whose recorded context matches the current
//! config, so interrupted sweeps resume where they stopped. The merged CSV is
//! always rebuilt from the cell files in grid order.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alike::{alike_from_scores, AlikeConfig, MaskStrategy, SimilarityOperator};
use crate::attribution::{AttributionMatrix, Estimator};
use crate::cli::commands::{load_dataset, with_attributor, write_bytes, write_json};
use crate::cli::config::{Pairing, RunConfig, SweepGrid};
use crate::cli::error::{CliError, CliResult, ErrorCode};
use crate::data::{stratified_split, SplitPair};
use crate::eval::surrogate::agreement_report;
use crate::eval::{wilcoxon_signed_rank, Surrogate, WilcoxonResult};
use crate::forest::{fit_forest, ForestParams, TrainedForest};
use crate::proximity::{distance_matrix, DistanceMatrix};
use crate::selection::{select_from_attributions, Algorithm};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.json";
pub const CELL_DIR: &str = "sweep_cells";

/// One row of `sweep.csv`; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub estimator: Estimator,
    pub operator: SimilarityOperator,
    pub ignore_direction: bool,
    pub normalize: bool,
    pub mask_strategy: MaskStrategy,
    pub beta: f64,
    pub n_prototypes: usize,
    pub fidelity: f64,
    pub mean_mask_len: f64,
}

pub const SWEEP_HEADER: [&str; 11] = [
    "dataset",
    "algorithm",
    "estimator",
    "operator",
    "ignore_direction",
    "normalize",
    "mask_strategy",
    "beta",
    "n_prototypes",
    "fidelity",
    "mean_mask_len",
];

/// Everything outside the cell's own coordinates that affects its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellContext {
    dataset_path: String,
    label_column: String,
    missing_tokens: Vec<String>,
    test_fraction: f64,
    seed: u64,
    forest: ForestParams,
    shapley_background: usize,
    k_per_class: usize,
    m_total: usize,
    apete_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellFile {
    context: CellContext,
    row: SweepRow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    algorithm: Algorithm,
    estimator: Estimator,
    alike: AlikeConfig,
    beta: f64,
}

impl Cell {
    fn key(&self, dataset: &str) -> String {
        format!(
            "{dataset}__{}__{}__{}__{}__{}__{}__{}",
            self.algorithm,
            self.estimator,
            self.alike.operator,
            self.alike.ignore_direction,
            self.alike.normalize_similarity,
            self.alike.mask_strategy,
            self.beta
        )
    }
}

struct DatasetSpec {
    name: String,
    path: PathBuf,
    label_column: String,
}

fn dataset_specs(cfg: &RunConfig, grid: &SweepGrid) -> Vec<DatasetSpec> {
    if grid.datasets.is_empty() {
        let name = cfg
            .dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        vec![DatasetSpec {
            name,
            path: cfg.dataset.clone(),
            label_column: cfg.label_column.clone(),
        }]
    } else {
        grid.datasets
            .iter()
            .map(|d| DatasetSpec {
                name: d.name.clone(),
                path: d.path.clone(),
                label_column: d.label_column.clone(),
            })
            .collect()
    }
}

/// Grid cells in output order: algorithm, estimator, operator,
/// ignore_direction, normalize, mask_strategy, beta.
fn cells(grid: &SweepGrid) -> Vec<Cell> {
    let mut out = Vec::new();
    for &algorithm in &grid.algorithms {
        for &estimator in &grid.estimators {
            for &operator in &grid.operators {
                for &ignore_direction in &grid.ignore_direction {
                    for &normalize_similarity in &grid.normalize {
                        for &mask_strategy in &grid.mask_strategies {
                            for &beta in &grid.betas {
                                out.push(Cell {
                                    algorithm,
                                    estimator,
                                    alike: AlikeConfig {
                                        ignore_direction,
                                        normalize_similarity,
                                        operator,
                                        mask_strategy,
                                    },
                                    beta,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Shared per-dataset state: split, forest, distances and black-box labels.
struct Prepared {
    split: SplitPair,
    forest: TrainedForest,
    dist: DistanceMatrix,
    predicted_train: Vec<usize>,
    predicted_test: Vec<usize>,
}

fn prepare(cfg: &RunConfig, spec: &DatasetSpec) -> CliResult<Prepared> {
    let ds = load_dataset(&spec.path, &spec.label_column, &cfg.missing_tokens)?;
    let split = stratified_split(&ds, cfg.test_fraction, cfg.seed)?;
    let forest = fit_forest(&split.train, &cfg.forest, cfg.seed)?;
    let dist = distance_matrix(&forest, &split.train)?;
    let predicted_train = forest.predict_all(&split.train)?;
    let predicted_test = forest.predict_all(&split.test)?;
    Ok(Prepared {
        split,
        forest,
        dist,
        predicted_train,
        predicted_test,
    })
}

fn run_cell(
    cfg: &RunConfig,
    dataset: &str,
    p: &Prepared,
    train_attr: &AttributionMatrix,
    test_attr: &AttributionMatrix,
    cell: &Cell,
) -> CliResult<SweepRow> {
    let sel_cfg = crate::selection::SelectionConfig {
        algorithm: cell.algorithm,
        beta: cell.beta,
        alike: cell.alike,
        k_per_class: cfg.selection.k_per_class,
        m_total: cfg.selection.m_total,
        apete_threshold: cfg.selection.apete_threshold,
    };
    let selection = select_from_attributions(&p.dist, Some(train_attr), &p.predicted_train, &sel_cfg)?;
    let protos = selection.prototypes;
    let surrogate = Surrogate::new(&p.forest, &protos, &p.split.train)?;
    let test = &p.split.test;
    let per_row: Vec<(usize, usize)> = (0..test.n_rows())
        .into_par_iter()
        .map(|i| {
            let nearest = surrogate.nearest(test.row(i))?;
            let parts = alike_from_scores(test_attr.row(i), train_attr.row(nearest.index), &cell.alike)?;
            Ok((nearest.label, parts.mask.count_ones()))
        })
        .collect::<crate::Result<_>>()?;
    let surrogate_labels: Vec<usize> = per_row.iter().map(|r| r.0).collect();
    let report = agreement_report(
        "prototypes",
        protos.len(),
        &p.predicted_test,
        &surrogate_labels,
        p.forest.n_classes(),
    )?;
    let mean_mask_len = per_row.iter().map(|r| r.1 as f64).sum::<f64>() / per_row.len() as f64;
    Ok(SweepRow {
        dataset: dataset.to_string(),
        algorithm: cell.algorithm,
        estimator: cell.estimator,
        operator: cell.alike.operator,
        ignore_direction: cell.alike.ignore_direction,
        normalize: cell.alike.normalize_similarity,
        mask_strategy: cell.alike.mask_strategy,
        beta: cell.beta,
        n_prototypes: protos.len(),
        fidelity: report.fidelity,
        mean_mask_len,
    })
}

fn read_cell(path: &Path, context: &CellContext) -> Option<SweepRow> {
    let bytes = fs::read(path).ok()?;
    let file: CellFile = serde_json::from_slice(&bytes).ok()?;
    (file.context == *context).then_some(file.row)
}

/// Writes through a temporary name so a crash never leaves a truncated cell.
fn write_cell(path: &Path, file: &CellFile) -> CliResult<()> {
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, file)?;
    fs::rename(&tmp, path).map_err(|e| crate::Error::io(path, e).into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonPair {
    pub key: String,
    pub beta_zero: f64,
    pub beta_positive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub pairing: Pairing,
    pub n_cells: usize,
    pub pairs: Vec<WilcoxonPair>,
    pub wilcoxon: Option<WilcoxonResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn best(rows: &[&SweepRow]) -> Option<f64> {
    rows.iter().map(|r| r.fidelity).reduce(f64::max)
}

/// β = 0 vs β > 0 fidelity pairs under the chosen pairing.
pub fn wilcoxon_pairs(rows: &[SweepRow], pairing: Pairing) -> Vec<WilcoxonPair> {
    let group_key = |r: &SweepRow| match pairing {
        Pairing::PerDataset => r.dataset.clone(),
        Pairing::PerConfig => format!(
            "{}__{}__{}__{}__{}__{}__{}",
            r.dataset, r.algorithm, r.estimator, r.operator, r.ignore_direction, r.normalize, r.mask_strategy
        ),
    };
    let mut keys: Vec<String> = Vec::new();
    for r in rows {
        let k = group_key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .filter_map(|key| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| group_key(r) == key).collect();
            let zero: Vec<&SweepRow> = group.iter().copied().filter(|r| r.beta == 0.0).collect();
            let positive: Vec<&SweepRow> = group.iter().copied().filter(|r| r.beta > 0.0).collect();
            Some(WilcoxonPair {
                key,
                beta_zero: best(&zero)?,
                beta_positive: best(&positive)?,
            })
        })
        .collect()
}

pub fn summarize(rows: &[SweepRow], pairing: Pairing) -> SweepSummary {
    let pairs = wilcoxon_pairs(rows, pairing);
    let (wilcoxon, note) = if pairs.is_empty() {
        (None, Some("no group has both beta = 0 and beta > 0 cells".to_string()))
    } else {
        let xy: Vec<(f64, f64)> = pairs.iter().map(|p| (p.beta_positive, p.beta_zero)).collect();
        match wilcoxon_signed_rank(&xy) {
            Ok(w) => (Some(w), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    SweepSummary {
        pairing,
        n_cells: rows.len(),
        pairs,
        wilcoxon,
        note,
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> CliResult<()> {
    let grid = cfg.sweep.clone().ok_or_else(|| {
        CliError::new(ErrorCode::ConfigInvalid, "sweep needs a `sweep` section in the config")
    })?;
    let cell_dir = cfg.output_dir.join(CELL_DIR);
    fs::create_dir_all(&cell_dir).map_err(|e| CliError::from(crate::Error::io(&cell_dir, e)))?;
    let grid_cells = cells(&grid);
    let mut rows = Vec::new();

    for spec in dataset_specs(cfg, &grid) {
        let context = CellContext {
            dataset_path: spec.path.display().to_string(),
            label_column: spec.label_column.clone(),
            missing_tokens: cfg.missing_tokens.clone(),
            test_fraction: cfg.test_fraction,
            seed: cfg.seed,
            forest: cfg.forest.clone(),
            shapley_background: cfg.shapley_background,
            k_per_class: cfg.selection.k_per_class,
            m_total: cfg.selection.m_total,
            apete_threshold: cfg.selection.apete_threshold,
        };
        let paths: Vec<PathBuf> = grid_cells
            .iter()
            .map(|c| cell_dir.join(format!("{}.json", c.key(&spec.name))))
            .collect();
        let mut done: Vec<Option<SweepRow>> = paths.iter().map(|p| read_cell(p, &context)).collect();
        let reused = done.iter().filter(|r| r.is_some()).count();
        log::info!("{}: {reused}/{} cells already done", spec.name, grid_cells.len());

        if reused < grid_cells.len() {
            let prepared = prepare(cfg, &spec)?;
            for &estimator in &grid.estimators {
                let todo: Vec<usize> = (0..grid_cells.len())
                    .filter(|&i| done[i].is_none() && grid_cells[i].estimator == estimator)
                    .collect();
                if todo.is_empty() {
                    continue;
                }
                let (train_attr, test_attr) =
                    with_attributor(cfg, estimator, &prepared.forest, &prepared.split.train, |a| {
                        Ok((a.matrix(&prepared.split.train)?, a.matrix(&prepared.split.test)?))
                    })?;
                let results: Vec<(usize, SweepRow)> = todo
                    .par_iter()
                    .map(|&i| {
                        let row = run_cell(cfg, &spec.name, &prepared, &train_attr, &test_attr, &grid_cells[i])?;
                        write_cell(
                            &paths[i],
                            &CellFile {
                                context: context.clone(),
                                row: row.clone(),
                            },
                        )?;
                        Ok((i, row))
                    })
                    .collect::<CliResult<_>>()?;
                for (i, row) in results {
                    done[i] = Some(row);
                }
            }
        }
        rows.extend(done.into_iter().map(|r| r.expect("every cell computed")));
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::new(ErrorCode::IoError, e.to_string());
    wtr.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in &rows {
        wtr.write_record([
            r.dataset.clone(),
            r.algorithm.to_string(),
            r.estimator.to_string(),
            r.operator.to_string(),
            r.ignore_direction.to_string(),
            r.normalize.to_string(),
            r.mask_strategy.to_string(),
            r.beta.to_string(),
            r.n_prototypes.to_string(),
            r.fidelity.to_string(),
            r.mean_mask_len.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CliError::new(ErrorCode::IoError, e.to_string()))?;
    write_bytes(&cfg.output_dir.join(SWEEP_CSV), &bytes)?;
    write_json(&cfg.output_dir.join(SWEEP_SUMMARY), &summarize(&rows, grid.pairing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dataset: &str, algorithm: Algorithm, beta: f64, fidelity: f64) -> SweepRow {
        SweepRow {
            dataset: dataset.into(),
            algorithm,
            estimator: Estimator::Saabas,
            operator: SimilarityOperator::Hadamard,
            ignore_direction: true,
            normalize: true,
            mask_strategy: MaskStrategy::MeanThreshold,
            beta,
            n_prototypes: 3,
            fidelity,
            mean_mask_len: 2.0,
        }
    }

    #[test]
    fn grid_cardinality() {
        let grid = SweepGrid {
            algorithms: vec![Algorithm::Gkm, Algorithm::Sma],
            betas: vec![0.0, 0.5],
            ..SweepGrid::default()
        };
        assert_eq!(cells(&grid).len(), 4);
    }

    #[test]
    fn pairing_modes() {
        let rows = vec![
            row("a", Algorithm::Gkm, 0.0, 0.9),
            row("a", Algorithm::Gkm, 0.5, 0.92),
            row("a", Algorithm::Sma, 0.0, 0.95),
            row("a", Algorithm::Sma, 0.5, 0.91),
            row("b", Algorithm::Gkm, 0.0, 0.8),
            row("b", Algorithm::Gkm, 2.5, 0.85),
        ];
        let per_ds = wilcoxon_pairs(&rows, Pairing::PerDataset);
        assert_eq!(per_ds.len(), 2);
        assert_eq!((per_ds[0].beta_zero, per_ds[0].beta_positive), (0.95, 0.92));
        let per_cfg = wilcoxon_pairs(&rows, Pairing::PerConfig);
        assert_eq!(per_cfg.len(), 3);
        let s = summarize(&rows, Pairing::PerConfig);
        assert_eq!(s.wilcoxon.unwrap().n, 3);
    }

    #[test]
    fn no_positive_beta_gives_note() {
        let rows = vec![row("a", Algorithm::Gkm, 0.0, 0.9)];
        let s = summarize(&rows, Pairing::PerDataset);
        assert!(s.wilcoxon.is_none());
        assert!(s.note.is_some());
    }
}
