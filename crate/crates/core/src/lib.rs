//! Support-level detection for OHLCV series.
//!
//! The main detector turns bars into five engineered features, computes
//! rolling Spearman correlation matrices over them, learns compressed
//! embeddings of those matrices with a multi-head attention autoencoder,
//! clusters the embeddings with DBSCAN and reports the median close of each
//! cluster as a support level. Six classic detectors share the same output
//! type, and [`evaluation`] scores any of them with six weighted metrics.

pub mod attention_net;
pub mod baselines;
pub mod clustering;
pub mod correlation;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod market_data;

pub use error::{Error, Result};
pub use exec::Execution;
