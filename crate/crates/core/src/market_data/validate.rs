use serde::Serialize;

use super::{BarSeries, Timestamp};

/// Zero-volume runs shorter than this are not reported.
pub const MIN_ZERO_VOLUME_RUN: usize = 3;
/// Constant-close runs of this length can fill a large part of a 32-bar
/// correlation window with ties.
pub const MIN_CONSTANT_PRICE_RUN: usize = 10;
/// Calendar days between daily bars above which a gap is reported.
pub const MAX_DAILY_GAP_DAYS: i64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Gap { after_bar: usize, span: String },
    ZeroVolumeRun { start: usize, end: usize },
    ConstantPriceRun { start: usize, end: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Advisory data-quality scan. Run bounds are inclusive bar indices.
pub fn validate_series(series: &BarSeries) -> ValidationReport {
    let bars = series.bars();
    let mut findings = Vec::new();

    let epoch_steps: Vec<i64> = bars
        .windows(2)
        .filter_map(|w| match (w[0].timestamp, w[1].timestamp) {
            (Timestamp::Epoch(a), Timestamp::Epoch(b)) => Some(b - a),
            _ => None,
        })
        .collect();
    let typical_step = {
        let mut s = epoch_steps.clone();
        s.sort_unstable();
        s.get(s.len() / 2).copied()
    };
    for (i, w) in bars.windows(2).enumerate() {
        let gap = match (w[0].timestamp, w[1].timestamp) {
            (Timestamp::Date(a), Timestamp::Date(b)) => {
                let days = (b - a).num_days();
                (days > MAX_DAILY_GAP_DAYS).then(|| format!("{days} days"))
            }
            (Timestamp::Epoch(a), Timestamp::Epoch(b)) => typical_step
                .filter(|&t| b - a > 3 * t)
                .map(|_| format!("{} s", b - a)),
            _ => None,
        };
        if let Some(span) = gap {
            findings.push(Finding::Gap { after_bar: i, span });
        }
    }

    for (start, end) in runs(bars.len(), |i| bars[i].volume == 0.0, |_, _| true) {
        if end - start + 1 >= MIN_ZERO_VOLUME_RUN {
            findings.push(Finding::ZeroVolumeRun { start, end });
        }
    }
    for (start, end) in runs(bars.len(), |_| true, |a, b| bars[a].close == bars[b].close) {
        if end - start + 1 >= MIN_CONSTANT_PRICE_RUN {
            findings.push(Finding::ConstantPriceRun { start, end });
        }
    }
    ValidationReport { findings }
}

/// Maximal runs of indices satisfying `member` where each consecutive pair
/// satisfies `link`.
fn runs(
    n: usize,
    member: impl Fn(usize) -> bool,
    link: impl Fn(usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if !member(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && member(i + 1) && link(i, i + 1) {
            i += 1;
        }
        out.push((start, i));
        i += 1;
    }
    out
}
