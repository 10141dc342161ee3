//! OHLCV bars: ingestion, validation and synthetic generation.

mod csv_io;
mod synthetic;
mod validate;

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_ohlcv_csv, write_ohlcv_csv};
pub use synthetic::{
    generate_band_series, generate_synthetic_series, BandSegment, BandSeriesConfig, PlantedEvent,
    PlantedLevel, PlantedTruth, ScriptedEvent, ScriptedOutcome, SyntheticConfig,
    SCRIPT_BOUNCE_CLOSE, SCRIPT_BREAK_CLOSE, SCRIPT_DIP_CLOSE, SCRIPT_HORIZON,
    SCRIPT_TOUCH_CLOSE,
};
pub use validate::{validate_series, Finding, ValidationReport};

/// Bar time stamp. Daily bars use calendar dates; intraday bars use epoch
/// seconds. A series never mixes the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    Date(NaiveDate),
    Epoch(i64),
}

impl Timestamp {
    pub fn parse(s: &str) -> Option<Timestamp> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(Timestamp::Date(d));
        }
        s.parse::<i64>().ok().map(Timestamp::Epoch)
    }

    fn same_kind(&self, other: &Timestamp) -> bool {
        matches!(
            (self, other),
            (Timestamp::Date(_), Timestamp::Date(_)) | (Timestamp::Epoch(_), Timestamp::Epoch(_))
        )
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Timestamp::Epoch(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: Timestamp,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Describes the first violated bar invariant, if any.
    pub fn check(&self) -> Option<String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Some("prices must be finite and > 0".into());
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Some(format!("volume {} must be finite and >= 0", self.volume));
        }
        if self.low > self.high {
            return Some(format!("low {} > high {}", self.low, self.high));
        }
        if self.open < self.low || self.open > self.high {
            return Some(format!("open {} outside [low, high]", self.open));
        }
        if self.close < self.low || self.close > self.high {
            return Some(format!("close {} outside [low, high]", self.close));
        }
        None
    }
}

/// Ordered bars for one ticker. Construction validates every invariant, so
/// a `BarSeries` in hand is always well formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSeries {
    ticker: String,
    bars: Vec<Bar>,
}

impl BarSeries {
    pub fn new(ticker: impl Into<String>, bars: Vec<Bar>) -> Result<Self> {
        let ticker = ticker.into();
        let mut offending = Vec::new();
        if bars.is_empty() {
            offending.push("series is empty".to_string());
        }
        for (i, bar) in bars.iter().enumerate() {
            if let Some(msg) = bar.check() {
                offending.push(format!("bar {i} ({}): {msg}", bar.timestamp));
            }
        }
        for (i, w) in bars.windows(2).enumerate() {
            if !w[0].timestamp.same_kind(&w[1].timestamp) {
                offending.push(format!("bar {}: mixed date and epoch timestamps", i + 1));
            } else if w[1].timestamp == w[0].timestamp {
                offending.push(format!("bar {}: duplicate timestamp {}", i + 1, w[1].timestamp));
            } else if w[1].timestamp < w[0].timestamp {
                offending.push(format!("bar {}: timestamp out of order", i + 1));
            }
        }
        if offending.is_empty() {
            Ok(BarSeries { ticker, bars })
        } else {
            Err(Error::InvalidBars { ticker, offending })
        }
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn lows(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.low).collect()
    }

    pub fn highs(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.high).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.volume).collect()
    }

    /// `[min low, max high]` over the whole series.
    pub fn price_range(&self) -> (f64, f64) {
        self.bars.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
            (lo.min(b.low), hi.max(b.high))
        })
    }

    /// `[min close, max close]` over the whole series.
    pub fn close_range(&self) -> (f64, f64) {
        self.bars.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
            (lo.min(b.close), hi.max(b.close))
        })
    }

    /// Same bars with every price multiplied by `k`.
    pub fn scaled_prices(&self, k: f64) -> Result<BarSeries> {
        let bars = self
            .bars
            .iter()
            .map(|b| Bar {
                open: b.open * k,
                high: b.high * k,
                low: b.low * k,
                close: b.close * k,
                ..*b
            })
            .collect();
        BarSeries::new(self.ticker.clone(), bars)
    }
}
