use serde::{Deserialize, Serialize};

use crate::clustering::{SupportLevel, SupportLevelSet};
use crate::error::{Error, Result};
use crate::market_data::BarSeries;

pub const QUANTILE_MIN_BARS: usize = 30;
/// Residuals are floored at this fraction of the mean absolute price when
/// forming IRLS weights.
const RESIDUAL_FLOOR: f64 = 1e-6;
const MAX_REFINEMENT_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileParams {
    pub quantiles: Vec<f64>,
    pub iterations: usize,
    /// Relative to the mean diagonal of the weighted normal matrix.
    pub ridge: f64,
}

impl Default for QuantileParams {
    fn default() -> Self {
        QuantileParams {
            quantiles: vec![0.05, 0.10, 0.20, 0.35],
            iterations: 50,
            ridge: 1e-8,
        }
    }
}

/// Fitted line `intercept + slope · x` for one quantile, with `x` the bar
/// index rescaled to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileFit {
    pub quantile: f64,
    pub intercept: f64,
    pub slope: f64,
    pub converged: bool,
}

impl QuantileFit {
    pub fn terminal(&self) -> f64 {
        self.intercept + self.slope
    }
}

fn pinball(q: f64, y: &[f64], x: &[f64], a: f64, b: f64) -> f64 {
    y.iter()
        .zip(x)
        .map(|(&y, &x)| {
            let r = y - (a + b * x);
            if r >= 0.0 {
                q * r
            } else {
                (q - 1.0) * r
            }
        })
        .sum()
}

fn weighted_line(y: &[f64], x: &[f64], w: &[f64], ridge: f64) -> Option<(f64, f64)> {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&y, &x), &w) in y.iter().zip(x).zip(w) {
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        t0 += w * y;
        t1 += w * x * y;
    }
    let lambda = ridge * (s0 + s2) / 2.0;
    let (m00, m11) = (s0 + lambda, s2 + lambda);
    let det = m00 * m11 - s1 * s1;
    if !(det.is_finite() && det > 0.0) {
        return None;
    }
    Some(((m11 * t0 - s1 * t1) / det, (m00 * t1 - s1 * t0) / det))
}

fn fit_one(q: f64, y: &[f64], x: &[f64], params: &QuantileParams) -> Result<QuantileFit> {
    let floor = RESIDUAL_FLOOR * y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64;
    let floor = if floor > 0.0 { floor } else { RESIDUAL_FLOOR };
    let (mut a, mut b) = weighted_line(y, x, &vec![1.0; y.len()], params.ridge).ok_or(Error::NonFinite("quantile_regression"))?;
    let mut best = (pinball(q, y, x, a, b), a, b);
    for _ in 0..params.iterations {
        let w: Vec<f64> = y
            .iter()
            .zip(x)
            .map(|(&y, &x)| {
                let r = y - (a + b * x);
                let side = if r >= 0.0 { q } else { 1.0 - q };
                side / r.abs().max(floor)
            })
            .collect();
        let Some((na, nb)) = weighted_line(y, x, &w, params.ridge) else {
            break;
        };
        let loss = pinball(q, y, x, na, nb);
        if loss < best.0 {
            best = (loss, na, nb);
        }
        (a, b) = (na, nb);
    }
    let (mut loss, mut a, mut b) = best;
    let mut pivot = (0..y.len())
        .min_by(|&i, &j| (y[i] - a - b * x[i]).abs().total_cmp(&(y[j] - a - b * x[j]).abs()))
        .expect("non-empty");
    let mut converged = false;
    for _ in 0..MAX_REFINEMENT_ROUNDS {
        match best_line_through(q, y, x, pivot) {
            Some((l, na, nb, next)) if l < loss => {
                (loss, a, b) = (l, na, nb);
                pivot = next;
            }
            _ => {
                converged = true;
                break;
            }
        }
    }
    Ok(QuantileFit {
        quantile: q,
        intercept: a,
        slope: b,
        converged,
    })
}

/// Lowest-loss line through observation `p`. Writing the residual of point
/// `k` as `|e_k| (t_k - s)` with `e_k = x_k - x_p` and `t_k` the slope to `k`
/// turns the problem into a weighted quantile of the `t_k`. Returns the loss,
/// the line and the second point it passes through.
fn best_line_through(q: f64, y: &[f64], x: &[f64], p: usize) -> Option<(f64, f64, f64, usize)> {
    let mut items: Vec<(f64, f64, f64, usize)> = (0..y.len())
        .filter(|&k| x[k] != x[p])
        .map(|k| {
            let e = x[k] - x[p];
            let side = if e > 0.0 { q } else { 1.0 - q };
            ((y[k] - y[p]) / e, e.abs(), side, k)
        })
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));
    let mut slope_derivative: f64 = -items.iter().map(|(_, w, side, _)| w * side).sum::<f64>();
    for &(t, w, _, k) in &items {
        slope_derivative += w;
        if slope_derivative >= 0.0 {
            let intercept = y[p] - t * x[p];
            return Some((pinball(q, y, x, intercept, t), intercept, t, k));
        }
    }
    None
}

/// Linear quantile regression of close on bar index, one fit per quantile.
/// Iteratively reweighted least squares on the pinball loss gives a
/// starting line. From the observation closest to it, the fit then
/// alternates between the best line through the current pivot and pivoting
/// on the new contact point, until the loss stops falling.
pub fn quantile_fits(series: &BarSeries, params: &QuantileParams) -> Result<Vec<QuantileFit>> {
    if series.len() < QUANTILE_MIN_BARS {
        return Err(Error::TooShort {
            what: "quantile_regression",
            required: QUANTILE_MIN_BARS,
            actual: series.len(),
        });
    }
    let y = series.closes();
    let last = (y.len() - 1) as f64;
    let x: Vec<f64> = (0..y.len()).map(|i| i as f64 / last).collect();
    params.quantiles.iter().map(|&q| fit_one(q, &y, &x, params)).collect()
}

/// Terminal fitted value per quantile, sorted to undo quantile crossing and
/// clamped to the close range.
pub fn detect_quantile_regression(series: &BarSeries, params: &QuantileParams) -> Result<SupportLevelSet> {
    let fits = quantile_fits(series, params)?;
    let (lo, hi) = series.close_range();
    let mut terminal: Vec<f64> = fits.iter().map(|f| f.terminal().clamp(lo, hi)).collect();
    terminal.sort_by(f64::total_cmp);
    let candidates = terminal
        .into_iter()
        .enumerate()
        .map(|(i, price)| SupportLevel {
            price,
            cluster_id: i as i64,
            member_count: 1,
            method: String::new(),
        })
        .collect();
    let set = SupportLevelSet::from_candidates(series.ticker(), "quantile_regression", candidates);
    let stalled: Vec<String> = fits.iter().filter(|f| !f.converged).map(|f| f.quantile.to_string()).collect();
    Ok(if stalled.is_empty() {
        set
    } else {
        set.with_warning(format!(
            "quantile_regression: IRLS did not converge for q = {}; using the best iterate",
            stalled.join(", ")
        ))
    })
}
