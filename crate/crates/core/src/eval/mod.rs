//! Surrogate fidelity, proxy baselines and summary statistics.

pub mod baselines;
pub mod stats;
pub mod surrogate;

pub use baselines::{baseline_fit_predict, BaselineKind};
pub use stats::{mask_statistics, wilcoxon_signed_rank, MaskStatistics, PMethod, WilcoxonResult};
pub use surrogate::{fidelity, surrogate_predict, FidelityReport, Nearest, Surrogate};
