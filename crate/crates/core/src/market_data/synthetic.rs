//! Deterministic synthetic series.
//!
//! [`generate_synthetic_series`] plays back a script of support-level events
//! (touch followed by bounce, shallow break, or deep break) on top of a flat
//! cruise price, so the evaluation metrics have an exact answer key.
//! [`generate_band_series`] produces consolidation bands for the detectors.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bar, BarSeries, Timestamp};
use crate::error::{Error, Result};

// Closes of scripted bars, as multiples of the level price. The script is
// unambiguous for any touch tolerance below 0.8%, break tolerance in
// (1.5%, 5%) and horizon of at least `SCRIPT_HORIZON` bars.
pub const SCRIPT_TOUCH_CLOSE: f64 = 1.008;
pub const SCRIPT_BOUNCE_CLOSE: f64 = 1.03;
pub const SCRIPT_DIP_CLOSE: f64 = 0.985;
pub const SCRIPT_RECLAIM_CLOSE: f64 = 1.02;
pub const SCRIPT_BREAK_CLOSE: f64 = 0.95;
/// A failed shallow break stays below the level for this many bars after the
/// touch bar.
pub const SCRIPT_HORIZON: usize = 10;

const SPIKE_MULTIPLIER: f64 = 3.0;
const WARMUP_BARS: usize = 20;
const SLOT_BARS: usize = 16;
const LEAD_BARS: usize = 3;
const MIN_LEVEL_SEPARATION: f64 = 1.10;
const MAX_NOISE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedOutcome {
    Bounce,
    ShallowBreakRecovered,
    ShallowBreakFailed,
    Break,
}

impl ScriptedOutcome {
    /// Level multiples of the closes from the touch bar onwards, and the
    /// offset of the bar that decides the outcome.
    fn path(self) -> (Vec<f64>, usize) {
        let mut p = vec![SCRIPT_TOUCH_CLOSE];
        let decided = match self {
            ScriptedOutcome::Bounce => {
                p.push(SCRIPT_BOUNCE_CLOSE);
                1
            }
            ScriptedOutcome::ShallowBreakRecovered => {
                p.extend([SCRIPT_DIP_CLOSE, SCRIPT_DIP_CLOSE, SCRIPT_RECLAIM_CLOSE]);
                3
            }
            ScriptedOutcome::ShallowBreakFailed => {
                p.extend([SCRIPT_DIP_CLOSE; SCRIPT_HORIZON + 1]);
                SCRIPT_HORIZON
            }
            ScriptedOutcome::Break => {
                p.extend([SCRIPT_BREAK_CLOSE; 3]);
                1
            }
        };
        (p, decided)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub outcome: ScriptedOutcome,
    /// Touch bar trades at three times the base volume.
    pub high_volume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLevel {
    pub price: f64,
    pub events: Vec<ScriptedEvent>,
}

impl PlantedLevel {
    /// A level touched `touch_count` times, bouncing on normal volume each time.
    pub fn bounces(price: f64, touch_count: usize) -> Self {
        PlantedLevel {
            price,
            events: vec![
                ScriptedEvent {
                    outcome: ScriptedOutcome::Bounce,
                    high_volume: false,
                };
                touch_count
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub ticker: String,
    pub length: usize,
    pub base_price: f64,
    pub planted_levels: Vec<PlantedLevel>,
    /// Relative amplitude of cruise-price noise; event bars are noise free.
    pub noise_scale: f64,
    pub base_volume: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            ticker: "SYNTH".into(),
            length: 300,
            base_price: 100.0,
            planted_levels: Vec::new(),
            noise_scale: 0.0,
            base_volume: 1_000_000.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub level_index: usize,
    pub level: f64,
    pub touch_bar: usize,
    pub touch_low: f64,
    pub outcome: ScriptedOutcome,
    pub outcome_bar: usize,
    pub high_volume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub levels: Vec<f64>,
    /// Chronological.
    pub events: Vec<PlantedEvent>,
}

fn weekday_dates(n: usize) -> Vec<Timestamp> {
    let mut d = NaiveDate::from_ymd_opt(2022, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(Timestamp::Date(d));
        }
        d = d + Days::new(1);
    }
    out
}

pub fn generate_synthetic_series(config: &SyntheticConfig) -> Result<(BarSeries, PlantedTruth)> {
    let infeasible = |m: String| Err(Error::InfeasibleScript(m));
    if config.length < 60 {
        return infeasible(format!("length {} < 60", config.length));
    }
    if !(config.base_price > 0.0 && config.base_price.is_finite()) {
        return infeasible(format!("base price {} must be positive", config.base_price));
    }
    if !(0.0..=MAX_NOISE).contains(&config.noise_scale) {
        return infeasible(format!("noise scale must lie in [0, {MAX_NOISE}]"));
    }
    if !(config.base_volume > 0.0) {
        return infeasible("base volume must be positive".into());
    }
    let cruise = config.base_price;
    let cruise_floor = cruise * (1.0 - config.noise_scale).powi(2);
    for (i, lvl) in config.planted_levels.iter().enumerate() {
        if !(lvl.price > 0.0) || lvl.price * SCRIPT_BOUNCE_CLOSE * 1.03 > cruise_floor {
            return infeasible(format!(
                "level {i} at {} is outside the price path (must be in (0, {:.6}])",
                lvl.price,
                cruise_floor / (SCRIPT_BOUNCE_CLOSE * 1.03)
            ));
        }
        for (j, other) in config.planted_levels.iter().enumerate().skip(i + 1) {
            let ratio = lvl.price.max(other.price) / lvl.price.min(other.price);
            if ratio < MIN_LEVEL_SEPARATION {
                return infeasible(format!(
                    "levels {i} and {j} are closer than {:.0}%",
                    (MIN_LEVEL_SEPARATION - 1.0) * 100.0
                ));
            }
        }
    }

    // Round-robin over levels so every level sees events spread over time.
    let mut schedule: Vec<(usize, ScriptedEvent)> = Vec::new();
    let max_events = config.planted_levels.iter().map(|l| l.events.len()).max().unwrap_or(0);
    for k in 0..max_events {
        for (i, lvl) in config.planted_levels.iter().enumerate() {
            if let Some(ev) = lvl.events.get(k) {
                schedule.push((i, *ev));
            }
        }
    }
    let needed = WARMUP_BARS + schedule.len() * SLOT_BARS + 1;
    if needed > config.length {
        return infeasible(format!(
            "{} events need at least {needed} bars, length is {}",
            schedule.len(),
            config.length
        ));
    }
    let spacing = if schedule.is_empty() {
        0
    } else {
        (config.length - WARMUP_BARS - 1) / schedule.len()
    };

    // Scripted closes (as absolute prices) keyed by bar index.
    let mut scripted: Vec<Option<f64>> = vec![None; config.length];
    let mut touch_low: Vec<Option<f64>> = vec![None; config.length];
    let mut spike = vec![false; config.length];
    let mut events = Vec::with_capacity(schedule.len());
    for (k, (level_index, ev)) in schedule.iter().enumerate() {
        let level = config.planted_levels[*level_index].price;
        let touch = WARMUP_BARS + k * spacing + LEAD_BARS;
        let (path, decided) = ev.outcome.path();
        for (off, mult) in path.iter().enumerate() {
            scripted[touch + off] = Some(level * mult);
        }
        touch_low[touch] = Some(level);
        spike[touch] = ev.high_volume;
        events.push(PlantedEvent {
            level_index: *level_index,
            level,
            touch_bar: touch,
            touch_low: level,
            outcome: ev.outcome,
            outcome_bar: touch + decided,
            high_volume: ev.high_volume,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noisy = config.noise_scale > 0.0;
    let dates = weekday_dates(config.length);
    let mut bars = Vec::with_capacity(config.length);
    let mut prev_close = cruise;
    for t in 0..config.length {
        let (z, u, w, vz): (f64, f64, f64, f64) = if noisy {
            (
                rng.random_range(-1.0..=1.0),
                rng.random_range(0.0..=1.0),
                rng.random_range(0.0..=1.0),
                rng.random_range(-1.0..=1.0),
            )
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        let open = prev_close;
        let bar = match scripted[t] {
            Some(close) => {
                let low = touch_low[t].unwrap_or(open.min(close));
                Bar {
                    timestamp: dates[t],
                    open,
                    high: open.max(close),
                    low,
                    close,
                    volume: 0.0,
                }
            }
            None => {
                // No lower wick on the bar leaving a scripted stretch, so the
                // climb back to cruise never brushes a level band.
                let wick = if t > 0 && scripted[t - 1].is_some() { 0.0 } else { w };
                let close = cruise * (1.0 + config.noise_scale * z);
                Bar {
                    timestamp: dates[t],
                    open,
                    high: open.max(close) * (1.0 + config.noise_scale * u),
                    low: open.min(close) * (1.0 - config.noise_scale * wick),
                    close,
                    volume: 0.0,
                }
            }
        };
        let mut volume = config.base_volume * (1.0 + 0.05 * vz);
        if spike[t] {
            volume *= SPIKE_MULTIPLIER;
        }
        prev_close = bar.close;
        bars.push(Bar { volume, ..bar });
    }

    let truth = PlantedTruth {
        levels: config.planted_levels.iter().map(|l| l.price).collect(),
        events,
    };
    Ok((BarSeries::new(config.ticker.clone(), bars)?, truth))
}

/// One consolidation band: closes wander inside `[low, high]` for `bars` bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSegment {
    pub low: f64,
    pub high: f64,
    pub bars: usize,
    /// Coupling between the signed close-to-close move and volume in
    /// `[-1, 1]`. Positive: rallies on heavy volume and declines on light
    /// volume; negative: the reverse.
    pub volume_coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSeriesConfig {
    pub ticker: String,
    pub segments: Vec<BandSegment>,
    pub base_volume: f64,
    pub seed: u64,
}

impl BandSeriesConfig {
    /// Two 150-bar bands, 90–94 then 106–110, with opposite volume behaviour.
    pub fn two_bands(seed: u64) -> Self {
        BandSeriesConfig {
            ticker: "BANDS".into(),
            segments: vec![
                BandSegment {
                    low: 90.0,
                    high: 94.0,
                    bars: 150,
                    volume_coupling: 0.8,
                },
                BandSegment {
                    low: 106.0,
                    high: 110.0,
                    bars: 150,
                    volume_coupling: -0.8,
                },
            ],
            base_volume: 1_000_000.0,
            seed,
        }
    }
}

/// Reflected random walk of closes inside each band in turn.
pub fn generate_band_series(config: &BandSeriesConfig) -> Result<BarSeries> {
    if config.segments.is_empty() {
        return Err(Error::InfeasibleScript("no band segments".into()));
    }
    for (i, s) in config.segments.iter().enumerate() {
        if !(s.low > 0.0 && s.high > s.low && s.bars > 0) {
            return Err(Error::InfeasibleScript(format!(
                "segment {i}: need 0 < low < high and bars > 0"
            )));
        }
    }
    let total: usize = config.segments.iter().map(|s| s.bars).sum();
    let dates = weekday_dates(total);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bars = Vec::with_capacity(total);
    let mut prev_close = (config.segments[0].low + config.segments[0].high) / 2.0;
    let mut t = 0;
    for seg in &config.segments {
        let width = seg.high - seg.low;
        let mut close = if (seg.low..=seg.high).contains(&prev_close) {
            prev_close
        } else {
            seg.low + width * rng.random_range(0.3..0.7)
        };
        for _ in 0..seg.bars {
            let step = width * 0.12 * rng.random_range(-1.0..1.0);
            let mut next = close + step;
            if next < seg.low {
                next = 2.0 * seg.low - next;
            }
            if next > seg.high {
                next = 2.0 * seg.high - next;
            }
            close = next.clamp(seg.low, seg.high);
            let open = prev_close;
            let signed = ((close - open) / (width * 0.12)).clamp(-1.0, 1.0);
            let shock: f64 = rng.random_range(-1.0..1.0);
            let volume = config.base_volume
                * (1.0 + 0.6 * seg.volume_coupling * signed + 0.25 * shock).max(0.05);
            let wick = width * 0.02;
            bars.push(Bar {
                timestamp: dates[t],
                open,
                high: open.max(close) + wick * rng.random_range(0.0..1.0),
                low: open.min(close) - wick * rng.random_range(0.0..1.0),
                close,
                volume,
            });
            prev_close = close;
            t += 1;
        }
    }
    BarSeries::new(config.ticker.clone(), bars)
}
