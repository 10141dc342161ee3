use serde::{Deserialize, Serialize};

use crate::clustering::SupportLevelSet;
use crate::features::compute_volume_ratio;
use crate::market_data::BarSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Bounce,
    Hold,
    Break,
    ShallowBreakRecovered,
    ShallowBreakFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    /// Half-width of the touch band around a level, relative.
    pub touch_tolerance: f64,
    /// Bars after the touch bar inspected for the outcome.
    pub horizon: usize,
    /// Closes below `level · (1 - break_tolerance)` are breaks.
    pub break_tolerance: f64,
    /// A bounce needs a close at `touch_low · (1 + bounce_recovery)`.
    pub bounce_recovery: f64,
    /// Touches of one level within this many bars of the previous touch are
    /// folded into it.
    pub collapse_bars: usize,
}

impl Default for EventParams {
    fn default() -> Self {
        EventParams {
            touch_tolerance: 0.005,
            horizon: 10,
            break_tolerance: 0.03,
            bounce_recovery: 0.01,
            collapse_bars: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchEvent {
    pub level: f64,
    pub touch_bar: usize,
    pub touch_low: f64,
    pub outcome: Outcome,
    pub outcome_bar: usize,
    pub volume_ratio_at_touch: f64,
}

/// A touch is a bar whose low lies within the touch band of a level while
/// the previous close was above the level. Closes from the touch bar through
/// `horizon` bars later decide the outcome, scanning forward:
///
/// * a close below the break threshold is a `Break`;
/// * otherwise a close below the touch band starts a dip;
/// * after a dip, a close back above the level is `ShallowBreakRecovered`;
/// * without a dip, a close at `touch_low · (1 + bounce_recovery)` is a
///   `Bounce`.
///
/// If the window ends first the outcome is `ShallowBreakFailed` after a dip
/// and `Hold` otherwise. Events are ordered by touch bar, then level.
pub fn find_touch_events(series: &BarSeries, levels: &SupportLevelSet, params: &EventParams) -> Vec<TouchEvent> {
    let bars = series.bars();
    let ratios = compute_volume_ratio(series);
    let mut events = Vec::new();
    for level in levels.prices() {
        let band_lo = level * (1.0 - params.touch_tolerance);
        let band_hi = level * (1.0 + params.touch_tolerance);
        let break_at = level * (1.0 - params.break_tolerance);
        let mut last_touch: Option<usize> = None;
        for t in 1..bars.len() {
            let low = bars[t].low;
            if !(low >= band_lo && low <= band_hi && bars[t - 1].close > level) {
                continue;
            }
            let chained = last_touch.is_some_and(|p| t - p <= params.collapse_bars);
            last_touch = Some(t);
            if chained {
                continue;
            }
            let end = (t + params.horizon).min(bars.len() - 1);
            let mut dipped = false;
            let mut decided = None;
            for (j, bar) in bars.iter().enumerate().take(end + 1).skip(t) {
                let c = bar.close;
                if c < break_at {
                    decided = Some((Outcome::Break, j));
                } else if c < band_lo {
                    dipped = true;
                } else if dipped && c > level {
                    decided = Some((Outcome::ShallowBreakRecovered, j));
                } else if !dipped && c >= low * (1.0 + params.bounce_recovery) {
                    decided = Some((Outcome::Bounce, j));
                }
                if decided.is_some() {
                    break;
                }
            }
            let (outcome, outcome_bar) = decided.unwrap_or(if dipped {
                (Outcome::ShallowBreakFailed, end)
            } else {
                (Outcome::Hold, end)
            });
            events.push(TouchEvent {
                level,
                touch_bar: t,
                touch_low: low,
                outcome,
                outcome_bar,
                volume_ratio_at_touch: ratios[t],
            });
        }
    }
    events.sort_by(|a, b| a.touch_bar.cmp(&b.touch_bar).then(a.level.total_cmp(&b.level)));
    events
}
