//! `train`, `attribute`, `select`, `explain` and `evaluate`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alike::{alike_from_scores, AlikeConfig, ExplanationRecord, FeatureMask};
use crate::attribution::{Attributor, Estimator};
use crate::cli::config::{RunConfig, SelectionSection};
use crate::cli::error::{CliError, CliResult, ErrorCode};
use crate::data::{load_csv, stratified_split, Dataset, SplitPair};
use crate::eval::{
    baseline_fit_predict, fidelity, mask_statistics, BaselineKind, FidelityReport, MaskStatistics, Nearest,
    Surrogate,
};
use crate::forest::{fit_forest, load_forest, save_forest, TrainedForest};
use crate::proximity::distance_matrix;
use crate::selection::{select_from_attributions, PrototypeSet};

pub const FOREST_FILE: &str = "forest.json";
pub const SPLIT_FILE: &str = "split.json";
pub const RUN_META_FILE: &str = "run_meta.json";
pub const PROTOTYPES_FILE: &str = "prototypes.json";
pub const EXPLANATIONS_FILE: &str = "explanations.jsonl";
pub const EVALUATION_JSON: &str = "evaluation.json";
pub const EVALUATION_CSV: &str = "evaluation.csv";
pub const ATTRIBUTIONS_TRAIN: &str = "attributions_train.csv";
pub const ATTRIBUTIONS_TEST: &str = "attributions_test.csv";

/// Column order of `evaluation.csv`.
pub const EVALUATION_HEADER: [&str; 5] = ["method", "fidelity", "model_size", "n_test", "agreements"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_fraction: f64,
    pub n_rows: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub forest_format_version: i64,
    pub dataset: String,
    pub split_seed: u64,
    pub forest_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Agreement of the forest with the true test labels.
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeEntry {
    /// Row of the training split.
    pub index: usize,
    pub label: usize,
    /// Row of the source dataset.
    pub source_row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEcho {
    pub selection: SelectionSection,
    pub alike: AlikeConfig,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeFile {
    pub algorithm: String,
    pub beta: f64,
    pub config: SelectionEcho,
    pub prototypes: Vec<PrototypeEntry>,
    pub objective_trace: Vec<f64>,
}

impl PrototypeFile {
    pub fn prototype_set(&self) -> PrototypeSet {
        PrototypeSet {
            indices: self.prototypes.iter().map(|p| p.index).collect(),
            labels: self.prototypes.iter().map(|p| p.label).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_train: usize,
    pub n_test: usize,
    pub fidelity: Vec<FidelityReport>,
    pub mask_statistics: MaskStatistics,
}

/// Which split `explain` indexes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
}

pub fn artifact(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn read_artifact(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| {
        CliError::new(
            ErrorCode::ArtifactNotFound,
            format!("cannot read {}: {e}", path.display()),
        )
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = read_artifact(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::new(
            ErrorCode::CorruptPayload,
            format!("{}: {e}", path.display()),
        )
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::from(crate::Error::io(dir, e)))?;
    }
    fs::write(path, bytes).map_err(|e| crate::Error::io(path, e).into())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn load_dataset(path: &Path, label_column: &str, missing_tokens: &[String]) -> CliResult<Dataset> {
    if !path.is_file() {
        return Err(CliError::new(
            ErrorCode::DatasetNotFound,
            format!("dataset {} does not exist", path.display()),
        ));
    }
    Ok(load_csv(path, label_column, missing_tokens)?)
}

/// Training rows spread evenly over the split, used as the Shapley
/// oracle's background.
pub fn shapley_background(train: &Dataset, size: usize) -> crate::Result<Dataset> {
    let n = train.n_rows();
    let k = size.min(n).max(1);
    let idx: Vec<usize> = (0..k).map(|i| i * n / k).collect();
    train.subset(&idx)
}

/// Dataset, split and forest as written by `train`.
pub struct Trained {
    pub split: SplitPair,
    pub forest: TrainedForest,
}

impl Trained {
    pub fn load(cfg: &RunConfig) -> CliResult<Self> {
        let ds = load_dataset(&cfg.dataset, &cfg.label_column, &cfg.missing_tokens)?;
        let manifest: SplitManifest = read_json(&artifact(cfg, SPLIT_FILE))?;
        if manifest.n_rows != ds.n_rows() {
            return Err(CliError::new(
                ErrorCode::CorruptPayload,
                format!(
                    "split manifest covers {} rows but the dataset has {}",
                    manifest.n_rows,
                    ds.n_rows()
                ),
            ));
        }
        let split = SplitPair {
            train: ds.subset(&manifest.train_indices)?,
            test: ds.subset(&manifest.test_indices)?,
            train_indices: manifest.train_indices,
            test_indices: manifest.test_indices,
            seed: manifest.seed,
        };
        let forest = load_forest(&read_artifact(&artifact(cfg, FOREST_FILE))?)?;
        if forest.n_features() != ds.n_features() {
            return Err(crate::Error::DimensionMismatch {
                expected: forest.n_features(),
                got: ds.n_features(),
            }
            .into());
        }
        Ok(Self { split, forest })
    }
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let ds = load_dataset(&cfg.dataset, &cfg.label_column, &cfg.missing_tokens)?;
    log::info!(
        "loaded {} rows, {} features, {} classes",
        ds.n_rows(),
        ds.n_features(),
        ds.n_classes()
    );
    let split = stratified_split(&ds, cfg.test_fraction, cfg.seed)?;
    let forest = fit_forest(&split.train, &cfg.forest, cfg.seed)?;
    let predicted = forest.predict_all(&split.test)?;
    let correct = predicted
        .iter()
        .zip(split.test.labels())
        .filter(|(a, b)| a == b)
        .count();
    let accuracy = correct as f64 / split.test.n_rows() as f64;
    log::info!("hold-out accuracy {accuracy:.4}");

    write_bytes(&artifact(cfg, FOREST_FILE), &save_forest(&forest))?;
    write_json(
        &artifact(cfg, SPLIT_FILE),
        &SplitManifest {
            seed: cfg.seed,
            test_fraction: cfg.test_fraction,
            n_rows: ds.n_rows(),
            train_indices: split.train_indices.clone(),
            test_indices: split.test_indices.clone(),
        },
    )?;
    write_json(
        &artifact(cfg, RUN_META_FILE),
        &RunMeta {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            forest_format_version: crate::forest::FORMAT_VERSION,
            dataset: cfg.dataset.display().to_string(),
            split_seed: cfg.seed,
            forest_seed: cfg.seed,
            n_train: split.train.n_rows(),
            n_test: split.test.n_rows(),
            holdout_accuracy: accuracy,
        },
    )
}

/// Attributor for the configured estimator; the background sample it
/// borrows is returned alongside it by [`with_attributor`].
pub fn with_attributor<T>(
    cfg: &RunConfig,
    estimator: Estimator,
    forest: &TrainedForest,
    train: &Dataset,
    f: impl FnOnce(&Attributor<'_>) -> CliResult<T>,
) -> CliResult<T> {
    let background = match estimator {
        Estimator::ShapleyOracle => Some(shapley_background(train, cfg.shapley_background)?),
        Estimator::Saabas => None,
    };
    let attributor = Attributor::new(forest, estimator, background.as_ref())?;
    f(&attributor)
}

pub fn cmd_attribute(cfg: &RunConfig) -> CliResult<()> {
    let t = Trained::load(cfg)?;
    with_attributor(cfg, cfg.estimator, &t.forest, &t.split.train, |a| {
        for (ds, name) in [(&t.split.train, ATTRIBUTIONS_TRAIN), (&t.split.test, ATTRIBUTIONS_TEST)] {
            let m = a.matrix(ds)?;
            let mut buf = Vec::new();
            m.write_csv(ds.feature_names(), &mut buf)?;
            write_bytes(&artifact(cfg, name), &buf)?;
        }
        Ok(())
    })
}

pub fn cmd_select(cfg: &RunConfig) -> CliResult<()> {
    let t = Trained::load(cfg)?;
    let train = &t.split.train;
    let predicted = t.forest.predict_all(train)?;
    let dist = distance_matrix(&t.forest, train)?;
    let sel_cfg = cfg.selection_config();
    let attributions = if sel_cfg.beta == 0.0 {
        None
    } else {
        Some(with_attributor(cfg, cfg.estimator, &t.forest, train, |a| Ok(a.matrix(train)?))?)
    };
    let selection = select_from_attributions(&dist, attributions.as_ref(), &predicted, &sel_cfg)?;
    log::info!(
        "selected {} prototypes, final objective {:?}",
        selection.prototypes.len(),
        selection.objective_trace.last()
    );
    let file = PrototypeFile {
        algorithm: sel_cfg.algorithm.as_str().into(),
        beta: sel_cfg.beta,
        config: SelectionEcho {
            selection: cfg.selection.clone(),
            alike: cfg.alike,
            estimator: cfg.estimator,
        },
        prototypes: selection
            .prototypes
            .indices
            .iter()
            .zip(&selection.prototypes.labels)
            .map(|(&index, &label)| PrototypeEntry {
                index,
                label,
                source_row: t.split.train_indices[index],
            })
            .collect(),
        objective_trace: selection.objective_trace,
    };
    write_json(&artifact(cfg, PROTOTYPES_FILE), &file)
}

pub fn load_prototypes(cfg: &RunConfig) -> CliResult<PrototypeFile> {
    read_json(&artifact(cfg, PROTOTYPES_FILE))
}

/// Nearest prototype and alike parts of one instance.
#[derive(Debug, Clone)]
pub struct Explained {
    pub predicted_class: usize,
    pub nearest: Nearest,
    pub weights: Vec<f64>,
    pub mask: FeatureMask,
}

/// Explains `rows` of `ds` against the prototypes, in the given order.
pub fn explain_rows(
    attributor: &Attributor<'_>,
    surrogate: &Surrogate<'_>,
    train: &Dataset,
    ds: &Dataset,
    rows: &[usize],
    alike: &AlikeConfig,
) -> CliResult<Vec<Explained>> {
    let protos = surrogate.prototypes();
    let proto_phi: Vec<Vec<f64>> = protos
        .indices
        .par_iter()
        .map(|&i| attributor.attribute(train.row(i)).map(|a| a.phi))
        .collect::<crate::Result<_>>()?;
    let out: crate::Result<Vec<Explained>> = rows
        .par_iter()
        .map(|&r| {
            let x = ds.row(r);
            let phi = attributor.attribute(x)?;
            let nearest = surrogate.nearest(x)?;
            let parts = alike_from_scores(&phi.phi, &proto_phi[nearest.position], alike)?;
            Ok(Explained {
                predicted_class: phi.target_class,
                nearest,
                weights: parts.weights.0,
                mask: parts.mask,
            })
        })
        .collect();
    Ok(out?)
}

pub fn cmd_explain(cfg: &RunConfig, split: SplitChoice, instances: &[usize]) -> CliResult<()> {
    let t = Trained::load(cfg)?;
    let protos = load_prototypes(cfg)?.prototype_set();
    let train = &t.split.train;
    let ds = match split {
        SplitChoice::Train => train,
        SplitChoice::Test => &t.split.test,
    };
    let rows: Vec<usize> = if instances.is_empty() {
        (0..ds.n_rows()).collect()
    } else {
        instances.to_vec()
    };
    if let Some(&id) = rows.iter().find(|&&r| r >= ds.n_rows()) {
        return Err(crate::Error::UnknownInstanceId {
            id,
            len: ds.n_rows(),
        }
        .into());
    }
    let surrogate = Surrogate::new(&t.forest, &protos, train)?;
    let explained = with_attributor(cfg, cfg.estimator, &t.forest, train, |a| {
        explain_rows(a, &surrogate, train, ds, &rows, &cfg.alike)
    })?;
    let mut out = Vec::new();
    for (&id, e) in rows.iter().zip(explained) {
        let record = ExplanationRecord {
            instance_id: id,
            prototype_id: e.nearest.index,
            predicted_class: e.predicted_class,
            weights: e.weights,
            mask: e.mask,
            operator: cfg.alike.operator,
            strategy: cfg.alike.mask_strategy,
            estimator: cfg.estimator,
            distance: e.nearest.distance,
        };
        serde_json::to_writer(&mut out, &record).expect("serializable");
        out.push(b'\n');
    }
    write_bytes(&artifact(cfg, EXPLANATIONS_FILE), &out)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<()> {
    let t = Trained::load(cfg)?;
    let proto_file = load_prototypes(cfg)?;
    let protos = proto_file.prototype_set();
    let (train, test) = (&t.split.train, &t.split.test);

    let mut surrogate_report = fidelity(&protos, &t.forest, train, test)?;
    surrogate_report.method = format!("prototypes_{}", proto_file.algorithm);
    surrogate_report.config = serde_json::to_value(&proto_file.config).expect("serializable");
    let mut reports = vec![surrogate_report];

    let proxy_train = train.with_labels(t.forest.predict_all(train)?)?;
    let proxy_test = test.with_labels(t.forest.predict_all(test)?)?;
    for kind in BaselineKind::ALL {
        reports.push(baseline_fit_predict(kind, &proxy_train, &proxy_test)?);
    }

    let surrogate = Surrogate::new(&t.forest, &protos, train)?;
    let rows: Vec<usize> = (0..test.n_rows()).collect();
    let explained = with_attributor(cfg, cfg.estimator, &t.forest, train, |a| {
        explain_rows(a, &surrogate, train, test, &rows, &cfg.alike)
    })?;
    let masks: Vec<FeatureMask> = explained.into_iter().map(|e| e.mask).collect();
    let report = EvaluationReport {
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        fidelity: reports,
        mask_statistics: mask_statistics(&masks)?,
    };
    write_json(&artifact(cfg, EVALUATION_JSON), &report)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::new(ErrorCode::IoError, e.to_string());
    wtr.write_record(EVALUATION_HEADER).map_err(csv_err)?;
    for r in &report.fidelity {
        wtr.write_record([
            r.method.clone(),
            r.fidelity.to_string(),
            r.model_size.to_string(),
            r.n_test.to_string(),
            r.agreements.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CliError::new(ErrorCode::IoError, e.to_string()))?;
    write_bytes(&artifact(cfg, EVALUATION_CSV), &bytes)
}
