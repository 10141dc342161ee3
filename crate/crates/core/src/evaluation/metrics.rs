use serde::{Deserialize, Serialize};

use super::events::{Outcome, TouchEvent};
use super::regimes::{Regime, RegimeLabels};
use crate::clustering::SupportLevelSet;
use crate::error::{Error, Result};
use crate::market_data::BarSeries;

pub const PROXIMITY_BAND: (f64, f64) = (5.0, 35.0);
/// Percentile points outside the band at which a level scores 0.
pub const PROXIMITY_DECAY: f64 = 35.0;
pub const DEFAULT_VOLUME_THRESHOLD: f64 = 1.2;
pub const DEFAULT_BREAKOUT_RECOVERY: f64 = 0.8;
pub const METRIC_NAMES: [&str; 6] = [
    "support_accuracy",
    "price_proximity",
    "volume_confirmation",
    "regime_sensitivity",
    "hold_duration",
    "breakout_recovery",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub support_accuracy: f64,
    pub price_proximity: f64,
    pub volume_confirmation: f64,
    pub regime_sensitivity: f64,
    pub hold_duration: f64,
    pub breakout_recovery: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            support_accuracy: 0.25,
            price_proximity: 0.20,
            volume_confirmation: 0.20,
            regime_sensitivity: 0.15,
            hold_duration: 0.15,
            breakout_recovery: 0.05,
        }
    }
}

impl MetricWeights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn from_array(w: [f64; 6]) -> Self {
        MetricWeights {
            support_accuracy: w[0],
            price_proximity: w[1],
            volume_confirmation: w[2],
            regime_sensitivity: w[3],
            hold_duration: w[4],
            breakout_recovery: w[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.support_accuracy,
            self.price_proximity,
            self.volume_confirmation,
            self.regime_sensitivity,
            self.hold_duration,
            self.breakout_recovery,
        ]
    }

    /// Non-negative and summing to one.
    pub fn validate(&self) -> Result<()> {
        let w = self.to_array();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("metric weights must be finite and non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Config(format!("metric weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub support_accuracy: f64,
    pub price_proximity: f64,
    pub volume_confirmation: f64,
    pub regime_sensitivity: f64,
    pub hold_duration: f64,
    pub breakout_recovery: f64,
}

impl Metrics {
    pub fn from_array(m: [f64; 6]) -> Self {
        let w = MetricWeights::from_array(m);
        Metrics {
            support_accuracy: w.support_accuracy,
            price_proximity: w.price_proximity,
            volume_confirmation: w.volume_confirmation,
            regime_sensitivity: w.regime_sensitivity,
            hold_duration: w.hold_duration,
            breakout_recovery: w.breakout_recovery,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.support_accuracy,
            self.price_proximity,
            self.volume_confirmation,
            self.regime_sensitivity,
            self.hold_duration,
            self.breakout_recovery,
        ]
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn count(events: &[&TouchEvent], outcome: Outcome) -> usize {
    events.iter().filter(|e| e.outcome == outcome).count()
}

/// Bounces over touches; 0 without touches.
pub fn metric_support_accuracy(events: &[TouchEvent]) -> f64 {
    let all: Vec<&TouchEvent> = events.iter().collect();
    ratio(count(&all, Outcome::Bounce), all.len())
}

/// Mid-rank percentile of `level` among `closes`, in percent.
pub fn price_percentile(closes: &[f64], level: f64) -> f64 {
    let below = closes.iter().filter(|&&c| c < level).count() as f64;
    let equal = closes.iter().filter(|&&c| c == level).count() as f64;
    100.0 * (below + 0.5 * equal) / closes.len() as f64
}

/// Mean per-level score: 1 inside the 5th to 35th percentile band of closes,
/// decaying linearly to 0 at 35 percentile points outside it.
pub fn metric_price_proximity(series: &BarSeries, levels: &SupportLevelSet) -> f64 {
    if levels.is_empty() {
        return 0.0;
    }
    let closes = series.closes();
    let (lo, hi) = PROXIMITY_BAND;
    let total: f64 = levels
        .prices()
        .iter()
        .map(|&l| {
            let p = price_percentile(&closes, l);
            let distance = if p < lo {
                lo - p
            } else if p > hi {
                p - hi
            } else {
                0.0
            };
            (1.0 - distance / PROXIMITY_DECAY).max(0.0)
        })
        .sum();
    total / levels.len() as f64
}

/// Share of bounces whose touch bar had a volume ratio of at least
/// `threshold`; 0 without bounces.
pub fn metric_volume_confirmation(events: &[TouchEvent], threshold: f64) -> f64 {
    let bounces: Vec<&TouchEvent> = events.iter().filter(|e| e.outcome == Outcome::Bounce).collect();
    let confirmed = bounces.iter().filter(|e| e.volume_ratio_at_touch >= threshold).count();
    ratio(confirmed, bounces.len())
}

/// Mean of the per-regime support accuracies times one minus their
/// population standard deviation. Regimes without events are left out; 0
/// without events.
pub fn metric_regime_sensitivity(events: &[TouchEvent], regimes: &RegimeLabels) -> f64 {
    let accuracies: Vec<f64> = Regime::ALL
        .iter()
        .filter_map(|&r| {
            let inside: Vec<&TouchEvent> = events.iter().filter(|e| regimes.labels.get(e.touch_bar) == Some(&r)).collect();
            (!inside.is_empty()).then(|| ratio(count(&inside, Outcome::Bounce), inside.len()))
        })
        .collect();
    if accuracies.is_empty() {
        return 0.0;
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean * (1.0 - std)).clamp(0.0, 1.0)
}

/// Per touched level: bars from its first touch to the first close below
/// `level · (1 - break_tolerance)`, over the bars remaining after the first
/// touch (1 when never broken). Mean over touched levels; 0 when none.
pub fn metric_hold_duration(series: &BarSeries, levels: &SupportLevelSet, events: &[TouchEvent], break_tolerance: f64) -> f64 {
    let closes = series.closes();
    let last = closes.len() - 1;
    let values: Vec<f64> = levels
        .prices()
        .iter()
        .filter_map(|&level| {
            let first = events.iter().filter(|e| e.level == level).map(|e| e.touch_bar).min()?;
            let remaining = last - first;
            if remaining == 0 {
                return Some(1.0);
            }
            let broken = (first..=last).find(|&j| closes[j] < level * (1.0 - break_tolerance));
            Some(broken.map_or(1.0, |j| (j - first) as f64 / remaining as f64))
        })
        .collect();
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Recovered over all shallow breaks; `DEFAULT_BREAKOUT_RECOVERY` when
/// there were none.
pub fn metric_breakout_recovery(events: &[TouchEvent]) -> f64 {
    let all: Vec<&TouchEvent> = events.iter().collect();
    let recovered = count(&all, Outcome::ShallowBreakRecovered);
    let failed = count(&all, Outcome::ShallowBreakFailed);
    if recovered + failed == 0 {
        DEFAULT_BREAKOUT_RECOVERY
    } else {
        ratio(recovered, recovered + failed)
    }
}

/// Weighted sum of the six metrics, each of which must lie in `[0, 1]`.
pub fn overall_score(metrics: &Metrics, weights: &MetricWeights) -> Result<f64> {
    let m = metrics.to_array();
    for (name, &value) in METRIC_NAMES.iter().zip(&m) {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::MetricOutOfRange { name, value });
        }
    }
    Ok(m.iter().zip(weights.to_array()).map(|(m, w)| m * w).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(outcome: Outcome, touch_bar: usize, ratio: f64) -> TouchEvent {
        TouchEvent {
            level: 100.0,
            touch_bar,
            touch_low: 100.0,
            outcome,
            outcome_bar: touch_bar,
            volume_ratio_at_touch: ratio,
        }
    }

    #[test]
    fn weights_sum_to_one() {
        MetricWeights::default().validate().unwrap();
        let mut w = MetricWeights::default();
        w.breakout_recovery = 0.0;
        assert!(w.validate().is_err());
        w.breakout_recovery = -0.05;
        w.hold_duration = 0.25;
        assert!(w.validate().is_err());
    }

    #[test]
    fn accuracy_counts() {
        let e = [
            ev(Outcome::Bounce, 1, 1.0),
            ev(Outcome::Bounce, 2, 1.0),
            ev(Outcome::Bounce, 3, 1.0),
            ev(Outcome::Break, 4, 1.0),
        ];
        assert_eq!(metric_support_accuracy(&e), 0.75);
        assert_eq!(metric_support_accuracy(&[]), 0.0);
        assert_eq!(metric_support_accuracy(&e[..3]), 1.0);
    }

    #[test]
    fn volume_confirmation_counts() {
        let e = [
            ev(Outcome::Bounce, 1, 1.5),
            ev(Outcome::Bounce, 2, 1.2),
            ev(Outcome::Bounce, 3, 1.0),
            ev(Outcome::Bounce, 4, 0.9),
            ev(Outcome::Break, 5, 3.0),
        ];
        assert_eq!(metric_volume_confirmation(&e, 1.2), 0.5);
        assert_eq!(metric_volume_confirmation(&e[4..], 1.2), 0.0);
        assert_eq!(metric_volume_confirmation(&e[..2], 1.2), 1.0);
    }

    #[test]
    fn regime_formula() {
        let labels = RegimeLabels {
            labels: vec![Regime::Bull, Regime::Bull, Regime::Bear, Regime::Bear, Regime::Sideways],
        };
        let e = [ev(Outcome::Bounce, 0, 1.0), ev(Outcome::Bounce, 1, 1.0), ev(Outcome::Break, 2, 1.0)];
        assert_eq!(metric_regime_sensitivity(&e, &labels), 0.25);
        assert_eq!(metric_regime_sensitivity(&[], &labels), 0.0);
        let five = |o| (0..5).map(move |i| ev(if i < 3 { Outcome::Bounce } else { o }, 0, 1.0));
        let mut e: Vec<TouchEvent> = five(Outcome::Break).collect();
        e.extend(five(Outcome::Hold).map(|x| TouchEvent { touch_bar: 2, ..x }));
        e.extend(five(Outcome::Break).map(|x| TouchEvent { touch_bar: 4, ..x }));
        assert!((metric_regime_sensitivity(&e, &labels) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn breakout_recovery_default_and_ratio() {
        assert_eq!(metric_breakout_recovery(&[]), 0.8);
        let mut e = vec![ev(Outcome::ShallowBreakRecovered, 0, 1.0); 4];
        e.push(ev(Outcome::ShallowBreakFailed, 0, 1.0));
        assert_eq!(metric_breakout_recovery(&e), 0.8);
        assert_eq!(metric_breakout_recovery(&e[4..]), 0.0);
    }

    #[test]
    fn percentile_is_mid_rank() {
        let closes: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(price_percentile(&closes, 20.5), 20.0);
        assert_eq!(price_percentile(&closes, 20.0), 19.5);
        assert_eq!(price_percentile(&closes, 0.0), 0.0);
    }

    #[test]
    fn proximity_scores() {
        use crate::clustering::SupportLevel;
        use crate::market_data::{Bar, Timestamp};
        let bars = (1..=100)
            .map(|i| {
                let c = f64::from(i);
                Bar { timestamp: Timestamp::Epoch(i as i64), open: c, high: c, low: c, close: c, volume: 1.0 }
            })
            .collect();
        let s = BarSeries::new("P", bars).unwrap();
        let set = |p: &[f64]| {
            SupportLevelSet::from_candidates(
                "P",
                "m",
                p.iter()
                    .map(|&price| SupportLevel { price, cluster_id: 0, member_count: 1, method: String::new() })
                    .collect(),
            )
        };
        assert_eq!(metric_price_proximity(&s, &set(&[20.5])), 1.0);
        assert_eq!(metric_price_proximity(&s, &set(&[70.5])), 0.0);
        assert_eq!(metric_price_proximity(&s, &set(&[52.0])), 1.0 - 16.5 / 35.0);
        assert_eq!(metric_price_proximity(&s, &set(&[20.5, 70.5])), 0.5);
        assert_eq!(metric_price_proximity(&s, &set(&[])), 0.0);
    }

    #[test]
    fn hold_duration_spans() {
        use crate::clustering::SupportLevel;
        use crate::market_data::{Bar, Timestamp};
        // Touch at bar 0, first close under the break line at bar 5 of 10.
        let closes = [101.0, 101.0, 102.0, 99.0, 98.0, 96.0, 101.0, 103.0, 104.0, 104.0, 105.0];
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Bar { timestamp: Timestamp::Epoch(i as i64), open: c, high: c, low: c, close: c, volume: 1.0 })
            .collect();
        let s = BarSeries::new("H", bars).unwrap();
        let set = |p: &[f64]| {
            SupportLevelSet::from_candidates(
                "H",
                "m",
                p.iter()
                    .map(|&price| SupportLevel { price, cluster_id: 0, member_count: 1, method: String::new() })
                    .collect(),
            )
        };
        let events = [ev(Outcome::Bounce, 0, 1.0)];
        assert_eq!(metric_hold_duration(&s, &set(&[100.0]), &events, 0.03), 0.5);
        assert_eq!(metric_hold_duration(&s, &set(&[100.0]), &events, 0.05), 1.0);
        assert_eq!(metric_hold_duration(&s, &set(&[100.0, 50.0]), &events, 0.03), 0.5);
        assert_eq!(metric_hold_duration(&s, &set(&[100.0]), &[], 0.03), 0.0);
    }

    #[test]
    fn overall_rejects_out_of_range() {
        let mut m = Metrics::from_array([1.0; 6]);
        assert!((overall_score(&m, &MetricWeights::default()).unwrap() - 1.0).abs() < 1e-15);
        m.hold_duration = 1.5;
        assert!(matches!(
            overall_score(&m, &MetricWeights::default()),
            Err(Error::MetricOutOfRange { name: "hold_duration", .. })
        ));
    }
}
