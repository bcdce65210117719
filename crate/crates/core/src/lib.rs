//! Graph collaborative filtering with popularity-bias-aware propagation.
//!
//! The crate covers the full pipeline: interaction ingestion and k-core
//! filtering ([`data`]), LightGCN and attention-weighted propagation
//! ([`model`]), BPR training with exact reverse-mode gradients ([`train`]),
//! accuracy and item-fairness metrics ([`eval`]), numerical checks of the
//! over-smoothing limit and its degree-ordering consequences ([`theory`]),
//! and the command-line driver ([`cli`]).

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod model;
pub mod seed;
pub mod synthetic;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
