use serde::{Deserialize, Serialize};

use super::ClusterLabels;
use crate::attention_net::Embedding;
use crate::error::{Error, Result};
use crate::market_data::BarSeries;

/// Levels closer than this relative distance are merged into one.
pub const LEVEL_MERGE_TOLERANCE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportLevel {
    pub price: f64,
    pub cluster_id: i64,
    pub member_count: usize,
    #[serde(skip)]
    pub method: String,
}

/// Support levels of one method on one ticker, ascending by price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportLevelSet {
    pub ticker: String,
    pub method: String,
    pub levels: Vec<SupportLevel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SupportLevelSet {
    /// Sorts the candidates and merges neighbours within
    /// [`LEVEL_MERGE_TOLERANCE`] of the running group price. A merged level
    /// takes the member-weighted mean price, the summed member count and the
    /// smallest cluster id of its group.
    pub fn from_candidates(
        ticker: impl Into<String>,
        method: impl Into<String>,
        mut candidates: Vec<SupportLevel>,
    ) -> Self {
        let method = method.into();
        candidates.retain(|c| c.price.is_finite());
        candidates.sort_by(|a, b| a.price.total_cmp(&b.price).then(a.cluster_id.cmp(&b.cluster_id)));
        let mut levels: Vec<SupportLevel> = Vec::with_capacity(candidates.len());
        for c in candidates {
            match levels.last_mut() {
                Some(last) if (c.price - last.price).abs() < LEVEL_MERGE_TOLERANCE * last.price.abs() => {
                    let (wa, wb) = (last.member_count.max(1) as f64, c.member_count.max(1) as f64);
                    last.price = (last.price * wa + c.price * wb) / (wa + wb);
                    last.member_count += c.member_count;
                    last.cluster_id = last.cluster_id.min(c.cluster_id);
                }
                _ => levels.push(SupportLevel {
                    method: method.clone(),
                    ..c
                }),
            }
        }
        SupportLevelSet {
            ticker: ticker.into(),
            method,
            levels,
            warnings: Vec::new(),
        }
    }

    pub fn empty(ticker: impl Into<String>, method: impl Into<String>) -> Self {
        Self::from_candidates(ticker, method, Vec::new())
    }

    pub fn with_warning(mut self, warning: impl Into<String>) -> Self {
        self.warnings.push(warning.into());
        self
    }

    pub fn prices(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.price).collect()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Strictly ascending with adjacent levels at least the merge tolerance
    /// apart.
    pub fn is_well_formed(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].price - w[0].price >= LEVEL_MERGE_TOLERANCE * w[0].price.abs() && w[1].price > w[0].price)
            && self.levels.iter().all(|l| l.member_count >= 1 && l.price.is_finite())
    }
}

/// Median with the mean of the two central values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// One level per cluster: the median close over the last bars of the
/// cluster's windows.
pub fn extract_support_levels(
    labels: &ClusterLabels,
    embeddings: &[Embedding],
    series: &BarSeries,
) -> Result<SupportLevelSet> {
    if labels.labels.len() != embeddings.len() {
        return Err(Error::Config(format!(
            "{} labels for {} embeddings",
            labels.labels.len(),
            embeddings.len()
        )));
    }
    let closes = series.closes();
    if let Some(e) = embeddings.iter().find(|e| e.window_end == 0 || e.window_end > closes.len()) {
        return Err(Error::UnknownWindow(e.window_end));
    }
    let candidates = labels
        .members()
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(k, members)| {
            let prices: Vec<f64> = members.iter().map(|&i| closes[embeddings[i].window_end - 1]).collect();
            SupportLevel {
                price: median(&prices).expect("non-empty cluster"),
                cluster_id: k as i64,
                member_count: members.len(),
                method: super::DEEPSUPP_METHOD.into(),
            }
        })
        .collect();
    let set = SupportLevelSet::from_candidates(series.ticker(), super::DEEPSUPP_METHOD, candidates);
    Ok(if set.is_empty() {
        set.with_warning("every window was labelled noise; no support levels")
    } else {
        set
    })
}
