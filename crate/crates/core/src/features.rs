//! The five engineered per-bar features: close, cumulative VWAP, volume,
//! volume-weighted relative price change, and volume relative to its
//! trailing 20-bar mean.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::BarSeries;

pub const FEATURE_COUNT: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["Close", "VWAP", "Volume", "PriceChangeVolume", "VolumeRatio"];
pub const VOLUME_RATIO_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMatrix {
    pub ticker: String,
    /// One row per bar, columns in [`FEATURE_NAMES`] order.
    pub rows: Vec<[f64; FEATURE_COUNT]>,
    pub scaled: bool,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = FEATURE_NAMES.join(",");
        out.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingParams {
    pub min: [f64; FEATURE_COUNT],
    pub max: [f64; FEATURE_COUNT],
}

/// Cumulative VWAP on closes. Where cumulative volume is still zero the
/// close itself is used.
pub fn compute_vwap(series: &BarSeries) -> Vec<f64> {
    let mut pv = 0.0;
    let mut vol = 0.0;
    series
        .bars()
        .iter()
        .map(|b| {
            pv += b.close * b.volume;
            vol += b.volume;
            if vol > 0.0 {
                pv / vol
            } else {
                b.close
            }
        })
        .collect()
}

/// Bar indices where [`compute_vwap`] fell back to the close.
pub fn vwap_fallback_bars(series: &BarSeries) -> Vec<usize> {
    let mut vol = 0.0;
    series
        .bars()
        .iter()
        .enumerate()
        .filter_map(|(i, b)| {
            vol += b.volume;
            (vol == 0.0).then_some(i)
        })
        .collect()
}

/// `(P_t - P_{t-1}) / P_{t-1} * V_t`, zero on the first bar.
pub fn compute_price_change_volume(series: &BarSeries) -> Vec<f64> {
    let bars = series.bars();
    let mut out = Vec::with_capacity(bars.len());
    out.push(0.0);
    out.extend(
        bars.windows(2)
            .map(|w| (w[1].close - w[0].close) / w[0].close * w[1].volume),
    );
    out
}

/// `V_t` over the mean of the trailing 20 volumes including `t` (fewer on the
/// first 19 bars). A zero mean gives ratio 1.
pub fn compute_volume_ratio(series: &BarSeries) -> Vec<f64> {
    let v = series.volumes();
    (0..v.len())
        .map(|t| {
            let start = (t + 1).saturating_sub(VOLUME_RATIO_WINDOW);
            let window = &v[start..=t];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            if mean > 0.0 {
                v[t] / mean
            } else {
                1.0
            }
        })
        .collect()
}

pub fn build_feature_matrix(series: &BarSeries) -> Result<FeatureMatrix> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            what: "feature matrix",
            required: 2,
            actual: series.len(),
        });
    }
    let close = series.closes();
    let vwap = compute_vwap(series);
    let volume = series.volumes();
    let pcv = compute_price_change_volume(series);
    let ratio = compute_volume_ratio(series);
    let rows = (0..series.len())
        .map(|t| [close[t], vwap[t], volume[t], pcv[t], ratio[t]])
        .collect();
    Ok(FeatureMatrix {
        ticker: series.ticker().to_string(),
        rows,
        scaled: false,
    })
}

/// Per-column MinMax scaling over the full series. Constant columns map to 0.
pub fn minmax_scale(matrix: &FeatureMatrix) -> (FeatureMatrix, ScalingParams) {
    let mut min = [f64::INFINITY; FEATURE_COUNT];
    let mut max = [f64::NEG_INFINITY; FEATURE_COUNT];
    for r in &matrix.rows {
        for j in 0..FEATURE_COUNT {
            min[j] = min[j].min(r[j]);
            max[j] = max[j].max(r[j]);
        }
    }
    let rows = matrix
        .rows
        .iter()
        .map(|r| {
            let mut s = [0.0; FEATURE_COUNT];
            for j in 0..FEATURE_COUNT {
                let span = max[j] - min[j];
                s[j] = if span > 0.0 {
                    ((r[j] - min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
            s
        })
        .collect();
    (
        FeatureMatrix {
            ticker: matrix.ticker.clone(),
            rows,
            scaled: true,
        },
        ScalingParams { min, max },
    )
}
