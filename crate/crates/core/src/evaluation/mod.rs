//! Touch events, the six support-quality metrics, the weighted overall score
//! and cross-ticker comparison of detectors.

mod compare;
mod events;
mod metrics;
mod regimes;

pub use compare::{compare_methods, compare_methods_with, ComparisonRow, ComparisonTable, MethodTickerRun};
pub use events::{find_touch_events, EventParams, Outcome, TouchEvent};
pub use metrics::{
    metric_breakout_recovery, metric_hold_duration, metric_price_proximity, metric_regime_sensitivity,
    metric_support_accuracy, metric_volume_confirmation, overall_score, price_percentile, MetricWeights, Metrics,
    DEFAULT_BREAKOUT_RECOVERY, DEFAULT_VOLUME_THRESHOLD, METRIC_NAMES, PROXIMITY_BAND, PROXIMITY_DECAY,
};
pub use regimes::{classify_regimes, Regime, RegimeLabels, DEFAULT_REGIME_THRESHOLD, DEFAULT_REGIME_WINDOW};

use serde::{Deserialize, Serialize};

use crate::baselines::{run_detector, DetectorSpec};
use crate::clustering::SupportLevelSet;
use crate::error::Result;
use crate::market_data::BarSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub events: EventParams,
    pub volume_threshold: f64,
    pub regime_window: usize,
    pub regime_threshold: f64,
    pub weights: MetricWeights,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            events: EventParams::default(),
            volume_threshold: DEFAULT_VOLUME_THRESHOLD,
            regime_window: DEFAULT_REGIME_WINDOW,
            regime_threshold: DEFAULT_REGIME_THRESHOLD,
            weights: MetricWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounts {
    pub touches: usize,
    pub bounces: usize,
    pub holds: usize,
    pub breaks: usize,
    pub shallow_breaks_recovered: usize,
    pub shallow_breaks_failed: usize,
}

impl EventCounts {
    pub fn of(events: &[TouchEvent]) -> Self {
        let n = |o: Outcome| events.iter().filter(|e| e.outcome == o).count();
        EventCounts {
            touches: events.len(),
            bounces: n(Outcome::Bounce),
            holds: n(Outcome::Hold),
            breaks: n(Outcome::Break),
            shallow_breaks_recovered: n(Outcome::ShallowBreakRecovered),
            shallow_breaks_failed: n(Outcome::ShallowBreakFailed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ticker: String,
    pub method: String,
    pub metrics: Metrics,
    pub overall: f64,
    pub event_counts: EventCounts,
    pub level_count: usize,
}

/// All six metrics and the overall score of a level set on its series.
pub fn evaluate_levels(series: &BarSeries, levels: &SupportLevelSet, config: &EvaluationConfig) -> Result<EvaluationReport> {
    config.weights.validate()?;
    let events = find_touch_events(series, levels, &config.events);
    let regimes = classify_regimes(series, config.regime_window, config.regime_threshold);
    let metrics = Metrics {
        support_accuracy: metric_support_accuracy(&events),
        price_proximity: metric_price_proximity(series, levels),
        volume_confirmation: metric_volume_confirmation(&events, config.volume_threshold),
        regime_sensitivity: metric_regime_sensitivity(&events, &regimes),
        hold_duration: metric_hold_duration(series, levels, &events, config.events.break_tolerance),
        breakout_recovery: metric_breakout_recovery(&events),
    };
    Ok(EvaluationReport {
        ticker: series.ticker().to_string(),
        method: levels.method.clone(),
        overall: overall_score(&metrics, &config.weights)?,
        metrics,
        event_counts: EventCounts::of(&events),
        level_count: levels.len(),
    })
}

/// Runs the detector, then evaluates its levels.
pub fn evaluate_method(spec: &DetectorSpec, series: &BarSeries, config: &EvaluationConfig) -> Result<(SupportLevelSet, EvaluationReport)> {
    let levels = run_detector(spec, series)?;
    let mut report = evaluate_levels(series, &levels, config)?;
    report.method = spec.to_string();
    Ok((levels, report))
}
