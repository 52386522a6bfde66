//! JSON run configuration, validated in full before any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alike::{AlikeConfig, MaskStrategy, SimilarityOperator};
use crate::attribution::Estimator;
use crate::cli::error::{CliError, CliResult, ErrorCode};
use crate::forest::ForestParams;
use crate::selection::{Algorithm, SelectionConfig, DEFAULT_APETE_THRESHOLD};

fn default_missing_tokens() -> Vec<String> {
    vec![String::new(), "NA".into(), "?".into()]
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_seed() -> u64 {
    42
}

fn default_shapley_background() -> usize {
    50
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Selection settings as written in a config file. The alike settings used
/// for the fi term come from the top-level `alike` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    pub algorithm: Algorithm,
    pub beta: f64,
    pub k_per_class: usize,
    pub m_total: usize,
    pub apete_threshold: f64,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let d = SelectionConfig::default();
        Self {
            algorithm: d.algorithm,
            beta: d.beta,
            k_per_class: d.k_per_class,
            m_total: d.m_total,
            apete_threshold: DEFAULT_APETE_THRESHOLD,
        }
    }
}

impl SelectionSection {
    pub fn with_alike(&self, alike: AlikeConfig) -> SelectionConfig {
        SelectionConfig {
            algorithm: self.algorithm,
            beta: self.beta,
            alike,
            k_per_class: self.k_per_class,
            m_total: self.m_total,
            apete_threshold: self.apete_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Best β = 0 fidelity vs best β > 0 fidelity, one pair per dataset.
    #[default]
    PerDataset,
    /// One pair per grid cell other than β: its β = 0 fidelity vs the best
    /// β > 0 fidelity.
    PerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDataset {
    pub name: String,
    pub path: PathBuf,
    pub label_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    /// Empty means the run's own dataset.
    pub datasets: Vec<SweepDataset>,
    pub algorithms: Vec<Algorithm>,
    pub estimators: Vec<Estimator>,
    pub operators: Vec<SimilarityOperator>,
    pub ignore_direction: Vec<bool>,
    pub normalize: Vec<bool>,
    pub mask_strategies: Vec<MaskStrategy>,
    pub betas: Vec<f64>,
    pub pairing: Pairing,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            algorithms: vec![Algorithm::Gkm, Algorithm::Sma, Algorithm::Apete],
            estimators: vec![Estimator::Saabas],
            operators: vec![SimilarityOperator::Hadamard],
            ignore_direction: vec![true],
            normalize: vec![true],
            mask_strategies: vec![MaskStrategy::MeanThreshold],
            betas: vec![0.0, 0.5, 2.5],
            pairing: Pairing::PerDataset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths are resolved against the config file's directory.
    pub dataset: PathBuf,
    pub label_column: String,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Seeds both the split and the forest.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub estimator: Estimator,
    /// Training rows used as the Shapley oracle's background sample.
    #[serde(default = "default_shapley_background")]
    pub shapley_background: usize,
    #[serde(default)]
    pub alike: AlikeConfig,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::new(ErrorCode::ConfigInvalid, e.to_string()))
    }

    /// Reads, resolves relative dataset paths, applies overrides and
    /// validates.
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new(
                ErrorCode::ConfigNotFound,
                format!("cannot read config {}: {e}", path.display()),
            )
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset = resolve(base, &cfg.dataset);
        if let Some(sweep) = cfg.sweep.as_mut() {
            for ds in &mut sweep.datasets {
                ds.path = resolve(base, &ds.path);
            }
        }
        if let Some(out) = &overrides.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn selection_config(&self) -> SelectionConfig {
        self.selection.with_alike(self.alike)
    }

    pub fn validate(&self) -> CliResult<()> {
        let invalid = |msg: String| Err(CliError::new(ErrorCode::ConfigInvalid, msg));
        check_dataset(&self.dataset)?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return invalid(format!("test_fraction must lie in (0,1), got {}", self.test_fraction));
        }
        let f = &self.forest;
        if f.n_trees == 0 || f.max_depth == 0 || f.min_leaf == 0 || f.features_per_split == Some(0) {
            return invalid("forest parameters must be positive".into());
        }
        if self.shapley_background == 0 {
            return invalid("shapley_background must be positive".into());
        }
        self.selection_config()
            .validate()
            .or_else(|e| invalid(e.to_string()))?;
        if let Some(grid) = &self.sweep {
            for ds in &grid.datasets {
                check_dataset(&ds.path)?;
            }
            let empty = [
                ("algorithms", grid.algorithms.is_empty()),
                ("estimators", grid.estimators.is_empty()),
                ("operators", grid.operators.is_empty()),
                ("ignore_direction", grid.ignore_direction.is_empty()),
                ("normalize", grid.normalize.is_empty()),
                ("mask_strategies", grid.mask_strategies.is_empty()),
                ("betas", grid.betas.is_empty()),
            ];
            if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
                return invalid(format!("sweep.{name} must not be empty"));
            }
            if let Some(b) = grid.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
                return invalid(format!("sweep betas must be finite and non-negative, got {b}"));
            }
            let mut names: Vec<_> = grid.datasets.iter().map(|d| d.name.as_str()).collect();
            names.sort_unstable();
            if names.windows(2).any(|w| w[0] == w[1]) {
                return invalid("sweep dataset names must be unique".into());
            }
            if let Some(bad) = grid
                .datasets
                .iter()
                .find(|d| d.name.is_empty() || !d.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)))
            {
                return invalid(format!(
                    "sweep dataset name `{}` may only use letters, digits, `-`, `_` and `.`",
                    bad.name
                ));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_dataset(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new(
            ErrorCode::DatasetNotFound,
            format!("dataset {} does not exist", path.display()),
        ))
    }
}
