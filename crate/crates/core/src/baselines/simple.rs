use serde::{Deserialize, Serialize};

use crate::clustering::{median, SupportLevel, SupportLevelSet};
use crate::error::{Error, Result};
use crate::market_data::BarSeries;

pub const FIBONACCI_RATIOS: [f64; 5] = [0.236, 0.382, 0.5, 0.618, 0.786];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimaParams {
    pub order: usize,
    pub merge_tolerance: f64,
}

impl Default for LocalMinimaParams {
    fn default() -> Self {
        LocalMinimaParams {
            order: 5,
            merge_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalParams {
    pub merge_tolerance: f64,
}

impl Default for FractalParams {
    fn default() -> Self {
        FractalParams { merge_tolerance: 0.01 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FibonacciParams {
    /// Trailing bars for the swing range; `None` is the whole series.
    pub lookback: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingAverageParams {
    pub windows: Vec<usize>,
}

impl Default for MovingAverageParams {
    fn default() -> Self {
        MovingAverageParams {
            windows: vec![20, 50, 100, 200],
        }
    }
}

fn level(price: f64, id: usize, members: usize) -> SupportLevel {
    SupportLevel {
        price,
        cluster_id: id as i64,
        member_count: members,
        method: String::new(),
    }
}

/// Groups ascending values greedily: a value joins the current group when it
/// is within `tolerance` (relative) of the group's first value. Each group
/// becomes its median and size.
pub fn merge_within(mut values: Vec<f64>, tolerance: f64) -> Vec<(f64, usize)> {
    values.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[start] > tolerance * values[start].abs() {
            out.push((median(&values[start..i]).expect("non-empty group"), i - start));
            start = i;
        }
    }
    out
}

fn from_merged(series: &BarSeries, method: &str, values: Vec<f64>, tolerance: f64) -> SupportLevelSet {
    let candidates = merge_within(values, tolerance)
        .into_iter()
        .enumerate()
        .map(|(i, (p, n))| level(p, i, n))
        .collect();
    let set = SupportLevelSet::from_candidates(series.ticker(), method, candidates);
    if set.is_empty() {
        set.with_warning(format!("{method}: no qualifying bars"))
    } else {
        set
    }
}

fn require(series: &BarSeries, what: &'static str, required: usize) -> Result<()> {
    if series.len() < required {
        Err(Error::TooShort {
            what,
            required,
            actual: series.len(),
        })
    } else {
        Ok(())
    }
}

/// Bars whose low is strictly below every other low within `order` bars on
/// both sides. Bars without a full window are never minima.
pub fn detect_local_minima(series: &BarSeries, params: &LocalMinimaParams) -> Result<SupportLevelSet> {
    let k = params.order;
    require(series, "local_minima", 2 * k + 1)?;
    let lows = series.lows();
    let minima = (k..lows.len() - k)
        .filter(|&t| (t - k..=t + k).all(|j| j == t || lows[t] < lows[j]))
        .map(|t| lows[t])
        .collect();
    Ok(from_merged(series, "local_minima", minima, params.merge_tolerance))
}

/// Five-bar down-fractals: a low strictly below the two lows on each side.
pub fn detect_fractal(series: &BarSeries, params: &FractalParams) -> Result<SupportLevelSet> {
    require(series, "fractal", 5)?;
    let lows = series.lows();
    let fractals = (2..lows.len() - 2)
        .filter(|&t| [t - 2, t - 1, t + 1, t + 2].iter().all(|&j| lows[t] < lows[j]))
        .map(|t| lows[t])
        .collect();
    Ok(from_merged(series, "fractal", fractals, params.merge_tolerance))
}

/// Retracements `H - r (H - L)` of the swing range plus the swing low.
pub fn detect_fibonacci(series: &BarSeries, params: &FibonacciParams) -> Result<SupportLevelSet> {
    require(series, "fibonacci", 2)?;
    let bars = series.bars();
    let from = params.lookback.map_or(0, |n| bars.len().saturating_sub(n));
    let window = &bars[from..];
    let high = window.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
    let low = window.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    let prices: Vec<f64> = if high == low {
        vec![high]
    } else {
        FIBONACCI_RATIOS
            .iter()
            .map(|r| high - r * (high - low))
            .chain(std::iter::once(low))
            .collect()
    };
    let candidates = prices.into_iter().enumerate().map(|(i, p)| level(p, i, 1)).collect();
    Ok(SupportLevelSet::from_candidates(series.ticker(), "fibonacci", candidates))
}

/// Terminal simple moving average of closes for each window that fits.
pub fn detect_moving_average(series: &BarSeries, params: &MovingAverageParams) -> Result<SupportLevelSet> {
    let shortest = params.windows.iter().copied().min().unwrap_or(1);
    require(series, "moving_average", shortest)?;
    let closes = series.closes();
    let candidates = params
        .windows
        .iter()
        .enumerate()
        .filter(|(_, &w)| w <= closes.len())
        .map(|(i, &w)| {
            let tail = &closes[closes.len() - w..];
            level(tail.iter().sum::<f64>() / w as f64, i, w)
        })
        .collect();
    Ok(SupportLevelSet::from_candidates(series.ticker(), "moving_average", candidates))
}
