use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{evaluate_method, EvaluationConfig, EvaluationReport, Metrics, METRIC_NAMES};
use crate::baselines::DetectorSpec;
use crate::clustering::SupportLevelSet;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::market_data::BarSeries;

/// Outcome of one detector on one ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTickerRun {
    pub method: String,
    pub ticker: String,
    pub levels: Option<SupportLevelSet>,
    pub report: Option<EvaluationReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    /// `None` when the method failed on every ticker.
    pub overall_mean: Option<f64>,
    /// Population standard deviation across tickers.
    pub overall_std: Option<f64>,
    pub metric_means: Option<Metrics>,
    pub tickers_evaluated: usize,
    pub excluded_ticker_count: usize,
    pub excluded_tickers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    /// Sorted by mean overall score, best first.
    pub rows: Vec<ComparisonRow>,
    /// Every (method, ticker) pair, methods in input order and tickers by
    /// name.
    pub runs: Vec<MethodTickerRun>,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "method",
    "overall_mean",
    "overall_std",
    METRIC_NAMES[0],
    METRIC_NAMES[1],
    METRIC_NAMES[2],
    METRIC_NAMES[3],
    METRIC_NAMES[4],
    METRIC_NAMES[5],
    "excluded_ticker_count",
];

pub fn compare_methods(specs: &[DetectorSpec], universe: &[BarSeries], config: &EvaluationConfig) -> Result<ComparisonTable> {
    compare_methods_with(specs, universe, config, Execution::default())
}

/// Evaluates every method on every ticker. Tickers are processed in name
/// order whatever their input order, so the table does not depend on it or
/// on the execution mode. A failing (method, ticker) pair is excluded from
/// that method's statistics and reported.
pub fn compare_methods_with(
    specs: &[DetectorSpec],
    universe: &[BarSeries],
    config: &EvaluationConfig,
    exec: Execution,
) -> Result<ComparisonTable> {
    if specs.is_empty() || universe.is_empty() {
        return Err(Error::Config("compare needs at least one method and one ticker".into()));
    }
    config.weights.validate()?;
    for spec in specs {
        spec.build()?;
    }
    let mut order: Vec<&BarSeries> = universe.iter().collect();
    order.sort_by(|a, b| a.ticker().cmp(b.ticker()));
    if let Some(w) = order.windows(2).find(|w| w[0].ticker() == w[1].ticker()) {
        return Err(Error::Config(format!("ticker {} appears twice", w[0].ticker())));
    }

    let tasks: Vec<(&DetectorSpec, &BarSeries)> = specs.iter().flat_map(|s| order.iter().map(move |&t| (s, t))).collect();
    let runs: Vec<MethodTickerRun> = exec::map(exec, &tasks, |&(spec, series)| {
        let method = spec.to_string();
        let ticker = series.ticker().to_string();
        match evaluate_method(spec, series, config) {
            Ok((levels, report)) => MethodTickerRun {
                method,
                ticker,
                levels: Some(levels),
                report: Some(report),
                error: None,
            },
            Err(e) => {
                log::warn!("excluding {ticker} from {method}: {e}");
                MethodTickerRun {
                    method,
                    ticker,
                    levels: None,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        }
    });

    let mut rows: Vec<ComparisonRow> = runs.chunks(order.len()).map(summarize).collect();
    rows.sort_by(|a, b| {
        let key = |r: &ComparisonRow| r.overall_mean.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then_with(|| a.method.cmp(&b.method))
    });
    Ok(ComparisonTable { rows, runs })
}

/// Aggregates the runs of one method.
fn summarize(runs: &[MethodTickerRun]) -> ComparisonRow {
    let reports: Vec<&EvaluationReport> = runs.iter().filter_map(|r| r.report.as_ref()).collect();
    let excluded: Vec<String> = runs.iter().filter(|r| r.report.is_none()).map(|r| r.ticker.clone()).collect();
    let n = reports.len() as f64;
    let (mean, std, means) = if reports.is_empty() {
        (None, None, None)
    } else {
        let mean = reports.iter().map(|r| r.overall).sum::<f64>() / n;
        let var = reports.iter().map(|r| (r.overall - mean).powi(2)).sum::<f64>() / n;
        let mut m = [0.0; 6];
        for r in &reports {
            for (acc, v) in m.iter_mut().zip(r.metrics.to_array()) {
                *acc += v;
            }
        }
        (Some(mean), Some(var.sqrt()), Some(Metrics::from_array(m.map(|x| x / n))))
    };
    ComparisonRow {
        method: runs[0].method.clone(),
        overall_mean: mean,
        overall_std: std,
        metric_means: means,
        tickers_evaluated: reports.len(),
        excluded_ticker_count: excluded.len(),
        excluded_tickers: excluded,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.method.clone(), opt(r.overall_mean), opt(r.overall_std)];
            match r.metric_means {
                Some(m) => rec.extend(m.to_array().iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), 6)),
            }
            rec.push(r.excluded_ticker_count.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Fixed-width table with three decimals.
    pub fn to_text(&self) -> String {
        let headers = ["method", "overall", "std", "accuracy", "proximity", "volume", "regime", "hold", "recovery", "excluded"];
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.method.clone(), fmt(r.overall_mean), fmt(r.overall_std)];
                let m = r.metric_means.map(|m| m.to_array().map(Some)).unwrap_or([None; 6]);
                cells.extend(m.iter().map(|&v| fmt(v)));
                cells.push(r.excluded_ticker_count.to_string());
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..headers.len())
            .map(|i| body.iter().map(|row| row[i].len()).chain([headers[i].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i == 0 {
                    let _ = write!(out, "{c:<w$}");
                } else {
                    let _ = write!(out, "  {c:>w$}");
                }
            }
            out.push('\n');
        };
        line(&headers.map(String::from));
        for row in &body {
            line(row);
        }
        out
    }
}
