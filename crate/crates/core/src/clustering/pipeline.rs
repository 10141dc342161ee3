use serde::{Deserialize, Serialize};

use super::{dbscan_with, default_min_samples, extract_support_levels, ClusterLabels, SupportLevelSet, DEFAULT_EPS};
use crate::attention_net::{embed_sequence_with, init_model, train, Embedding, ModelConfig, TrainedModel};
use crate::correlation::{rolling_correlation_matrices_with, CorrSequence, DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{build_feature_matrix, minmax_scale, FeatureMatrix, ScalingParams};
use crate::market_data::BarSeries;

pub const DEEPSUPP_METHOD: &str = "deepsupp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSuppConfig {
    pub window: usize,
    pub stride: usize,
    pub model: ModelConfig,
    pub eps: f64,
    /// `None` uses [`default_min_samples`] of the window count.
    pub min_samples: Option<usize>,
}

impl Default for DeepSuppConfig {
    fn default() -> Self {
        DeepSuppConfig {
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            model: ModelConfig::default(),
            eps: DEFAULT_EPS,
            min_samples: None,
        }
    }
}

/// Every intermediate of one DeepSupp run.
#[derive(Debug, Clone)]
pub struct DeepSuppRun {
    pub features: FeatureMatrix,
    pub scaling: ScalingParams,
    pub sequence: CorrSequence,
    pub trained: TrainedModel,
    pub embeddings: Vec<Embedding>,
    pub labels: ClusterLabels,
    pub levels: SupportLevelSet,
}

pub fn detect_deepsupp(series: &BarSeries, config: &DeepSuppConfig) -> Result<SupportLevelSet> {
    run_deepsupp(series, config, Execution::default()).map(|r| r.levels)
}

/// Features, scaling, rolling correlations, autoencoder training, embedding,
/// DBSCAN and median extraction. Deterministic for a fixed `config.model.seed`
/// in either execution mode.
pub fn run_deepsupp(series: &BarSeries, config: &DeepSuppConfig, exec: Execution) -> Result<DeepSuppRun> {
    let required = config.window + 1;
    if series.len() < required {
        return Err(Error::TooShort {
            what: "deepsupp",
            required,
            actual: series.len(),
        });
    }
    let raw = build_feature_matrix(series)?;
    let (features, scaling) = minmax_scale(&raw);
    let sequence = rolling_correlation_matrices_with(&features, config.window, config.stride, exec)?;
    let model = init_model(&config.model)?;
    let trained = train(&model, &sequence, &config.model)?;
    let embeddings = embed_sequence_with(&trained.model, &sequence, exec)?;
    let points: Vec<Vec<f64>> = embeddings.iter().map(|e| e.values.clone()).collect();
    let min_samples = config.min_samples.unwrap_or_else(|| default_min_samples(points.len()));
    let labels = dbscan_with(&points, config.eps, min_samples, exec)?;
    let levels = extract_support_levels(&labels, &embeddings, series)?;
    Ok(DeepSuppRun {
        features,
        scaling,
        sequence,
        trained,
        embeddings,
        labels,
        levels,
    })
}
