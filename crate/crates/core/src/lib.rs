//! Prototype-based explanations for random-forest classifiers on tabular
//! data.
//!
//! The pipeline trains a forest, scores per-instance feature attributions,
//! greedily selects prototypes in the forest's leaf co-occurrence space and
//! highlights the features an instance shares with its nearest prototype.

pub mod alike;
pub mod attribution;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod proximity;
pub mod selection;
pub mod synthetic;

pub use error::{Error, Result};
