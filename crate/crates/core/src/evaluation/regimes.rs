use serde::{Deserialize, Serialize};

use crate::market_data::BarSeries;

pub const DEFAULT_REGIME_WINDOW: usize = 60;
pub const DEFAULT_REGIME_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Bull,
    Bear,
    Sideways,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Bull, Regime::Bear, Regime::Sideways];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabels {
    pub labels: Vec<Regime>,
}

/// Trailing `window`-bar close return against `±threshold`. Bars with less
/// history are sideways.
pub fn classify_regimes(series: &BarSeries, window: usize, threshold: f64) -> RegimeLabels {
    let closes = series.closes();
    let labels = (0..closes.len())
        .map(|t| {
            if window == 0 || t < window {
                return Regime::Sideways;
            }
            let r = closes[t] / closes[t - window] - 1.0;
            if r > threshold {
                Regime::Bull
            } else if r < -threshold {
                Regime::Bear
            } else {
                Regime::Sideways
            }
        })
        .collect();
    RegimeLabels { labels }
}
