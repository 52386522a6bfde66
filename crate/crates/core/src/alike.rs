//! Alike parts: the features an instance and its nearest prototype both rely
//! on.
//!
//! The pipeline is attribution → score preprocessing → elementwise
//! similarity → binary mask. Preprocessing optionally takes absolute values
//! (`ignore_direction`) and then optionally rescales to squared shares
//! (`normalize_similarity`, `φ_l² / Σ_k φ_k²`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::{Attributor, Estimator};
use crate::data::Cell;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityOperator {
    /// `x · p`
    Hadamard,
    /// `1 − |x − p|`
    OneMinusL1,
    /// `1 − (x − p)²`
    OneMinusL2,
}

impl SimilarityOperator {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityOperator::Hadamard => "hadamard",
            SimilarityOperator::OneMinusL1 => "one_minus_l1",
            SimilarityOperator::OneMinusL2 => "one_minus_l2",
        }
    }

    #[inline]
    pub fn apply(self, x: f64, p: f64) -> f64 {
        match self {
            SimilarityOperator::Hadamard => x * p,
            SimilarityOperator::OneMinusL1 => 1.0 - (x - p).abs(),
            SimilarityOperator::OneMinusL2 => {
                let diff = x - p;
                1.0 - diff * diff
            }
        }
    }
}

impl fmt::Display for SimilarityOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard" => Ok(Self::Hadamard),
            "one_minus_l1" => Ok(Self::OneMinusL1),
            "one_minus_l2" => Ok(Self::OneMinusL2),
            other => Err(Error::InvalidParams(format!("unknown operator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    /// Keep features whose weight strictly exceeds the mean weight.
    MeanThreshold,
    /// Keep the ⌈√d⌉ heaviest features.
    TopSqrt,
    /// Keep the ⌈ln d⌉ heaviest features (at least one).
    TopLog,
}

impl MaskStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskStrategy::MeanThreshold => "mean_threshold",
            MaskStrategy::TopSqrt => "top_sqrt",
            MaskStrategy::TopLog => "top_log",
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_threshold" => Ok(Self::MeanThreshold),
            "top_sqrt" => Ok(Self::TopSqrt),
            "top_log" => Ok(Self::TopLog),
            other => Err(Error::InvalidParams(format!("unknown mask strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlikeConfig {
    pub ignore_direction: bool,
    pub normalize_similarity: bool,
    pub operator: SimilarityOperator,
    pub mask_strategy: MaskStrategy,
}

impl Default for AlikeConfig {
    fn default() -> Self {
        Self {
            ignore_direction: true,
            normalize_similarity: true,
            operator: SimilarityOperator::Hadamard,
            mask_strategy: MaskStrategy::MeanThreshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

/// Binary feature mask; serialized as a list of 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureMask(Vec<bool>);

impl FeatureMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.0.iter().map(|&b| u8::from(b)).collect()
    }
}

impl Serialize for FeatureMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_u8().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<u8>::deserialize(d)?;
        raw.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!("mask bit {other}"))),
            })
            .collect::<std::result::Result<_, _>>()
            .map(FeatureMask)
    }
}

/// φ̂: absolute value first (if enabled), then squared-share normalization
/// (if enabled). An all-zero vector normalizes to all zeros.
pub fn preprocess_scores(phi: &[f64], cfg: &AlikeConfig) -> Vec<f64> {
    let mut scores: Vec<f64> = if cfg.ignore_direction {
        phi.iter().map(|v| v.abs()).collect()
    } else {
        phi.to_vec()
    };
    if cfg.normalize_similarity {
        let total: f64 = scores.iter().map(|v| v * v).sum();
        if total > 0.0 {
            scores.iter_mut().for_each(|v| *v = *v * *v / total);
        } else {
            scores.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    scores
}

pub fn combine(x_hat: &[f64], p_hat: &[f64], operator: SimilarityOperator) -> Result<WeightVector> {
    if x_hat.len() != p_hat.len() {
        return Err(Error::LengthMismatch {
            left: x_hat.len(),
            right: p_hat.len(),
        });
    }
    Ok(WeightVector(
        x_hat
            .iter()
            .zip(p_hat)
            .map(|(&x, &p)| operator.apply(x, p))
            .collect(),
    ))
}

/// Index of the heaviest weight, ties to the lowest index.
fn heaviest(w: &[f64]) -> usize {
    crate::forest::argmax(w)
}

/// Features whose weight strictly exceeds the mean. If none does (uniform
/// weights), the single heaviest feature is kept instead.
pub fn mask_mean(w: &WeightVector) -> FeatureMask {
    let d = w.0.len();
    if d == 0 {
        return FeatureMask(Vec::new());
    }
    let mean = w.0.iter().sum::<f64>() / d as f64;
    let mut bits: Vec<bool> = w.0.iter().map(|&v| v > mean).collect();
    if !bits.iter().any(|&b| b) {
        bits[heaviest(&w.0)] = true;
    }
    FeatureMask(bits)
}

/// Number of features kept by a top-k strategy for `d` features.
pub fn topk_size(d: usize, strategy: MaskStrategy) -> usize {
    let k = match strategy {
        MaskStrategy::TopSqrt => crate::forest::ceil_sqrt(d),
        MaskStrategy::TopLog => (d as f64).ln().ceil().max(1.0) as usize,
        MaskStrategy::MeanThreshold => d,
    };
    k.min(d)
}

/// The k heaviest features; equal weights prefer the lower index.
pub fn mask_topk(w: &WeightVector, strategy: MaskStrategy) -> FeatureMask {
    let d = w.0.len();
    let k = topk_size(d, strategy);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| w.0[b].total_cmp(&w.0[a]).then(a.cmp(&b)));
    let mut bits = vec![false; d];
    for &i in &order[..k] {
        bits[i] = true;
    }
    FeatureMask(bits)
}

pub fn weights_to_mask(w: &WeightVector, strategy: MaskStrategy) -> FeatureMask {
    match strategy {
        MaskStrategy::MeanThreshold => mask_mean(w),
        MaskStrategy::TopSqrt | MaskStrategy::TopLog => mask_topk(w, strategy),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlikeParts {
    pub weights: WeightVector,
    pub mask: FeatureMask,
}

/// Preprocess, combine and mask two raw attribution vectors.
pub fn alike_from_scores(phi_x: &[f64], phi_p: &[f64], cfg: &AlikeConfig) -> Result<AlikeParts> {
    let x_hat = preprocess_scores(phi_x, cfg);
    let p_hat = preprocess_scores(phi_p, cfg);
    let weights = combine(&x_hat, &p_hat, cfg.operator)?;
    let mask = weights_to_mask(&weights, cfg.mask_strategy);
    Ok(AlikeParts { weights, mask })
}

/// Full alike-parts identification for an instance `x` and prototype `p`,
/// each attributed for its own predicted class.
pub fn identify_alike_parts(
    attributor: &Attributor<'_>,
    x: &[Cell],
    p: &[Cell],
    cfg: &AlikeConfig,
) -> Result<AlikeParts> {
    let phi_x = attributor.attribute(x)?;
    let phi_p = attributor.attribute(p)?;
    alike_from_scores(&phi_x.phi, &phi_p.phi, cfg)
}

/// One explained instance, as written to the JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub instance_id: usize,
    pub prototype_id: usize,
    pub predicted_class: usize,
    pub weights: Vec<f64>,
    pub mask: FeatureMask,
    pub operator: SimilarityOperator,
    pub strategy: MaskStrategy,
    pub estimator: Estimator,
    pub distance: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(ignore: bool, normalize: bool) -> AlikeConfig {
        AlikeConfig {
            ignore_direction: ignore,
            normalize_similarity: normalize,
            ..AlikeConfig::default()
        }
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(
            preprocess_scores(&[-1.5, 2.0, 0.0], &cfg(true, false)),
            vec![1.5, 2.0, 0.0]
        );
        let n = preprocess_scores(&[3.0, 4.0], &cfg(false, true));
        assert!((n[0] - 0.36).abs() < 1e-15 && (n[1] - 0.64).abs() < 1e-15);
        assert_eq!(preprocess_scores(&[0.0; 3], &cfg(true, true)), vec![0.0; 3]);
        assert_eq!(preprocess_scores(&[-1.0, 2.0], &cfg(false, false)), vec![-1.0, 2.0]);
    }

    #[test]
    fn operator_examples() {
        let w = combine(&[0.2, 0.8], &[0.5, 0.5], SimilarityOperator::Hadamard).unwrap();
        assert!((w.0[0] - 0.10).abs() < 1e-15 && (w.0[1] - 0.40).abs() < 1e-15);
        assert_eq!(combine(&[0.3], &[0.3], SimilarityOperator::OneMinusL1).unwrap().0, vec![1.0]);
        assert_eq!(combine(&[1.0], &[0.0], SimilarityOperator::OneMinusL2).unwrap().0, vec![0.0]);
        assert!(matches!(
            combine(&[1.0], &[0.0, 1.0], SimilarityOperator::Hadamard),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mean_mask_examples() {
        let w = WeightVector(vec![0.18, 0.02, 0.27, 0.00, 0.00, 0.51, 0.00]);
        assert_eq!(mask_mean(&w).to_u8(), vec![1, 0, 1, 0, 0, 1, 0]);
        assert_eq!(mask_mean(&WeightVector(vec![0.5, 0.5])).to_u8(), vec![1, 0]);
        assert_eq!(mask_mean(&WeightVector(vec![0.0, 0.0, 0.7, 0.0])).to_u8(), vec![0, 0, 1, 0]);
        assert_eq!(mask_mean(&WeightVector(vec![0.3])).to_u8(), vec![1]);
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_size(9, MaskStrategy::TopSqrt), 3);
        assert_eq!(topk_size(8, MaskStrategy::TopLog), 3);
        assert_eq!(topk_size(1, MaskStrategy::TopLog), 1);
        assert_eq!(topk_size(2, MaskStrategy::TopLog), 1);
        assert_eq!(topk_size(30, MaskStrategy::TopLog), 4);
        let w = WeightVector(vec![5.0, 4.0, 3.0, 2.0]);
        assert_eq!(mask_topk(&w, MaskStrategy::TopSqrt).to_u8(), vec![1, 1, 0, 0]);
        let tied = WeightVector(vec![1.0, 2.0, 2.0, 2.0]);
        assert_eq!(mask_topk(&tied, MaskStrategy::TopSqrt).to_u8(), vec![0, 1, 1, 0]);
    }

    #[test]
    fn identical_pair_falls_back_to_top1() {
        let phi = [0.3, -0.1, 0.6];
        let c = AlikeConfig {
            operator: SimilarityOperator::OneMinusL1,
            ..cfg(false, true)
        };
        let parts = alike_from_scores(&phi, &phi, &c).unwrap();
        assert_eq!(parts.weights.0, vec![1.0; 3]);
        assert_eq!(parts.mask.to_u8(), vec![1, 0, 0]);
    }

    #[test]
    fn mask_json_is_binary_list() {
        let m = FeatureMask::from_bits(vec![true, false, true]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[1,0,1]");
        assert_eq!(serde_json::from_str::<FeatureMask>(&s).unwrap(), m);
        assert!(serde_json::from_str::<FeatureMask>("[2]").is_err());
    }

    #[test]
    fn config_names_parse() {
        for op in ["hadamard", "one_minus_l1", "one_minus_l2"] {
            assert_eq!(op.parse::<SimilarityOperator>().unwrap().as_str(), op);
        }
        for st in ["mean_threshold", "top_sqrt", "top_log"] {
            assert_eq!(st.parse::<MaskStrategy>().unwrap().as_str(), st);
        }
        let c: AlikeConfig = serde_json::from_str(r#"{"operator":"one_minus_l2"}"#).unwrap();
        assert_eq!(c.operator, SimilarityOperator::OneMinusL2);
        assert!(c.ignore_direction && c.normalize_similarity);
    }
}
