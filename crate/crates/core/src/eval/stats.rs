//! Wilcoxon signed-rank test and alike-part mask summaries.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::alike::FeatureMask;
use crate::error::{Error, Result};

/// Largest non-zero sample size for which [`PMethod::Auto`] enumerates the
/// exact null distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Either `Exact` or `Normal`.
    pub method: PMethod,
}

/// Mid-ranks of `values` (1-based), ties sharing the mean rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(pairs, PMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(pairs: &[(f64, f64)], method: PMethod) -> Result<WilcoxonResult> {
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w_minus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d < 0.0).map(|(_, r)| r).sum();
    let statistic = w_plus.min(w_minus);
    let method = match method {
        PMethod::Auto if diffs.len() <= EXACT_MAX_N => PMethod::Exact,
        PMethod::Auto => PMethod::Normal,
        m => m,
    };
    let p_value = match method {
        PMethod::Exact => exact_p_value(&ranks, statistic),
        _ => normal_p_value(&ranks, statistic),
    };
    Ok(WilcoxonResult {
        n: diffs.len(),
        w_plus,
        w_minus,
        statistic,
        p_value,
        method,
    })
}

/// Two-sided `2 · P(T ≤ w)` where `T` is the positive-rank sum under all
/// `2ⁿ` equally likely sign assignments of `ranks`. Mid-ranks are multiples
/// of ½, so the distribution is tabulated over doubled ranks.
pub fn exact_p_value(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut prob = vec![0.0; total + 1];
    prob[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        reach += r;
        for s in (0..=reach).rev() {
            let with = if s >= r { prob[s - r] } else { 0.0 };
            prob[s] = 0.5 * (prob[s] + with);
        }
    }
    let limit = (2.0 * w).round() as usize;
    let tail: f64 = prob[..=limit.min(total)].iter().sum();
    (2.0 * tail).min(1.0)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn normal_p_value(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    // continuity correction toward the mean
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.cdf(-z)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskStatistics {
    pub n_masks: usize,
    pub activation_counts: Vec<usize>,
    /// `activation_counts / n_masks`.
    pub activation_frequencies: Vec<f64>,
    /// Population variance of `activation_frequencies`.
    pub frequency_variance: f64,
    pub lengths: LengthSummary,
}

/// Inclusive linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn mask_statistics(masks: &[FeatureMask]) -> Result<MaskStatistics> {
    let first = masks.first().ok_or_else(|| Error::EmptyInput("no masks".into()))?;
    let d = first.len();
    let mut counts = vec![0usize; d];
    let mut lengths = Vec::with_capacity(masks.len());
    for m in masks {
        if m.len() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: m.len(),
            });
        }
        for (c, &b) in counts.iter_mut().zip(m.bits()) {
            *c += usize::from(b);
        }
        lengths.push(m.count_ones() as f64);
    }
    let n = masks.len() as f64;
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let mean_freq = freqs.iter().sum::<f64>() / d.max(1) as f64;
    let frequency_variance = if d == 0 {
        0.0
    } else {
        freqs.iter().map(|f| (f - mean_freq).powi(2)).sum::<f64>() / d as f64
    };
    lengths.sort_by(f64::total_cmp);
    let lengths = LengthSummary {
        min: lengths[0],
        q1: quantile(&lengths, 0.25),
        median: quantile(&lengths, 0.5),
        mean: lengths.iter().sum::<f64>() / n,
        q3: quantile(&lengths, 0.75),
        max: lengths[lengths.len() - 1],
    };
    Ok(MaskStatistics {
        n_masks: masks.len(),
        activation_counts: counts,
        activation_frequencies: freqs,
        frequency_variance,
        lengths,
    })
}
