use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use deepsupp::attention_net::{
    export_attention_weights, init_model, matrix_to_csv, read_checkpoint, train, write_checkpoint, Model,
};
use deepsupp::baselines::run_detector;
use deepsupp::correlation::{padded_to_csv, rolling_correlation_matrices_with, CorrSequence};
use deepsupp::evaluation::{compare_methods_with, evaluate_method, ComparisonTable};
use deepsupp::exec;
use deepsupp::features::{build_feature_matrix, minmax_scale};
use deepsupp::market_data::{
    generate_band_series, generate_synthetic_series, load_ohlcv_csv, write_ohlcv_csv, BandSeriesConfig, BarSeries,
    PlantedLevel, ScriptedEvent, ScriptedOutcome, SyntheticConfig,
};

use crate::config::{ConfigError, RunConfig, SynthKind};
use crate::output::{file_stem, OutputDir};

pub const MANIFEST_FILE: &str = "run_manifest.txt";
pub const FAILURES_FILE: &str = "failures.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub ticker: String,
    pub method: Option<String>,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    /// Human-readable result printed to stdout.
    pub report: String,
}

impl RunSummary {
    /// 0 on full success, 1 when any ticker failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }

    fn fail(&mut self, ticker: &str, method: Option<&str>, error: impl ToString) {
        let error = error.to_string();
        match method {
            Some(m) => log::error!("{ticker} [{m}]: {error}"),
            None => log::error!("{ticker}: {error}"),
        }
        self.failures.push(Failure {
            ticker: ticker.to_string(),
            method: method.map(String::from),
            error,
        });
    }
}

/// Writes outputs and the manifest of one command.
struct Run {
    out: OutputDir,
    summary: RunSummary,
}

impl Run {
    fn start(cfg: &RunConfig, command: &str) -> Result<Self> {
        let out = OutputDir::create(&cfg.output_dir)?;
        let mut run = Run {
            out,
            summary: RunSummary::default(),
        };
        run.write(MANIFEST_FILE, cfg.manifest(command).as_bytes())?;
        Ok(run)
    }

    fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<()> {
        let p = self.out.write(relative, bytes)?;
        self.summary.written.push(p);
        Ok(())
    }

    fn write_json(&mut self, relative: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(relative, text.as_bytes())
    }

    fn finish(mut self) -> Result<RunSummary> {
        let failures_path = self.out.path(FAILURES_FILE)?;
        if self.summary.failures.is_empty() {
            if failures_path.exists() {
                fs::remove_file(&failures_path)?;
            }
        } else {
            let mut text = String::from("ticker,method,error\n");
            for f in &self.summary.failures {
                let error = f.error.replace('"', "'");
                text.push_str(&format!("{},{},\"{error}\"\n", f.ticker, f.method.as_deref().unwrap_or("")));
            }
            self.write(FAILURES_FILE, text.as_bytes())?;
        }
        Ok(self.summary)
    }

    /// Checks the inputs, writes the manifest, then loads the selected
    /// tickers; unreadable files become failures.
    fn open(cfg: &RunConfig, command: &str) -> Result<(Self, Vec<BarSeries>)> {
        let selected = select_inputs(cfg)?;
        let mut run = Run::start(cfg, command)?;
        let loaded = exec::map(cfg.execution(), &selected, |(t, p)| load_ohlcv_csv(p, t));
        let mut universe = Vec::new();
        for ((ticker, _), result) in selected.iter().zip(loaded) {
            match result {
                Ok(s) => universe.push(s),
                Err(e) => run.summary.fail(ticker, None, e),
            }
        }
        Ok((run, universe))
    }
}

/// Tickers and CSV paths a run will read, in ticker order.
fn select_inputs(cfg: &RunConfig) -> Result<Vec<(String, PathBuf)>> {
    let dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| ConfigError("data_dir is required".into()))?;
    let mut available: BTreeMap<String, PathBuf> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| ConfigError(format!("data_dir {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if let (true, Some(stem)) = (is_csv && path.is_file(), path.file_stem()) {
            available.insert(stem.to_string_lossy().into_owned(), path);
        }
    }
    let selected: Vec<(String, PathBuf)> = if cfg.tickers.is_empty() {
        available.into_iter().collect()
    } else {
        let mut picked = Vec::new();
        for t in &cfg.tickers {
            let path = available
                .get(t)
                .ok_or_else(|| ConfigError(format!("ticker {t} has no CSV in {}", dir.display())))?;
            picked.push((t.clone(), path.clone()));
        }
        picked.sort();
        picked.dedup();
        picked
    };
    if selected.is_empty() {
        return Err(ConfigError(format!("no CSV files in {}", dir.display())).into());
    }
    Ok(selected)
}

/// Support levels of every method on every ticker, one JSON file each.
pub fn cmd_detect(cfg: &RunConfig) -> Result<RunSummary> {
    let (mut run, universe) = Run::open(cfg, "detect")?;
    let tasks: Vec<(&BarSeries, usize)> = universe
        .iter()
        .flat_map(|s| (0..cfg.methods.len()).map(move |m| (s, m)))
        .collect();
    let results = exec::map(cfg.execution(), &tasks, |&(s, m)| run_detector(&cfg.methods[m], s));
    let mut ok = 0;
    for (&(s, m), result) in tasks.iter().zip(results) {
        let label = cfg.methods[m].to_string();
        match result {
            Ok(mut levels) => {
                levels.method = label.clone();
                run.write_json(&format!("levels/{}/{}.json", file_stem(s.ticker()), file_stem(&label)), &levels)?;
                ok += 1;
            }
            Err(e) => run.summary.fail(s.ticker(), Some(&label), e),
        }
    }
    run.summary.report = format!("{ok} level sets written\n");
    run.finish()
}

/// Evaluation report of every method on every ticker, one JSON file each.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<RunSummary> {
    let (mut run, universe) = Run::open(cfg, "evaluate")?;
    let tasks: Vec<(&BarSeries, usize)> = universe
        .iter()
        .flat_map(|s| (0..cfg.methods.len()).map(move |m| (s, m)))
        .collect();
    let results = exec::map(cfg.execution(), &tasks, |&(s, m)| evaluate_method(&cfg.methods[m], s, &cfg.evaluation));
    let mut report = String::new();
    for (&(s, m), result) in tasks.iter().zip(results) {
        let label = cfg.methods[m].to_string();
        match result {
            Ok((_, r)) => {
                report.push_str(&format!("{}\t{}\t{:.3}\n", r.ticker, r.method, r.overall));
                run.write_json(&format!("reports/{}/{}.json", file_stem(s.ticker()), file_stem(&label)), &r)?;
            }
            Err(e) => run.summary.fail(s.ticker(), Some(&label), e),
        }
    }
    run.summary.report = report;
    run.finish()
}

/// Closes with one constant column per detected level, ready for charting.
fn plot_data(series: &BarSeries, table: &ComparisonTable) -> String {
    let mut columns: Vec<(String, f64)> = Vec::new();
    for r in table.runs.iter().filter(|r| r.ticker == series.ticker()) {
        for (k, level) in r.levels.iter().flat_map(|l| l.levels.iter()).enumerate() {
            columns.push((format!("{}#{}", r.method, k + 1), level.price));
        }
    }
    let mut out = String::from("timestamp,close");
    for (name, _) in &columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for b in series.bars() {
        out.push_str(&format!("{},{}", b.timestamp, b.close));
        for (_, price) in &columns {
            out.push_str(&format!(",{price}"));
        }
        out.push('\n');
    }
    out
}

/// Comparison table as text and CSV, plus per-ticker plot data.
pub fn cmd_compare(cfg: &RunConfig) -> Result<RunSummary> {
    let (mut run, universe) = Run::open(cfg, "compare")?;
    if universe.is_empty() {
        run.summary.report = "no ticker could be loaded\n".into();
        return run.finish();
    }
    let table = compare_methods_with(&cfg.methods, &universe, &cfg.evaluation, cfg.execution())?;
    for r in table.runs.iter().filter(|r| r.error.is_some()) {
        run.summary.fail(&r.ticker, Some(&r.method), r.error.as_deref().unwrap_or_default());
    }
    let text = table.to_text();
    run.write("comparison.txt", text.as_bytes())?;
    run.write("comparison.csv", table.to_csv().as_bytes())?;
    for s in &universe {
        run.write(&format!("plot/{}.csv", file_stem(s.ticker())), plot_data(s, &table).as_bytes())?;
    }
    run.summary.report = text;
    run.finish()
}

fn sequence_of(cfg: &RunConfig, series: &BarSeries) -> deepsupp::Result<CorrSequence> {
    let (scaled, _) = minmax_scale(&build_feature_matrix(series)?);
    rolling_correlation_matrices_with(&scaled, cfg.deepsupp.window, cfg.deepsupp.stride, cfg.execution())
}

fn require_window_end(cfg: &RunConfig) -> Result<usize> {
    cfg.window_end
        .ok_or_else(|| ConfigError("window_end is required for this command".into()).into())
}

/// Per-head attention maps of one window. The model comes from `checkpoint`
/// or is trained per ticker, in which case its checkpoint is saved.
pub fn cmd_dump_attention(cfg: &RunConfig) -> Result<RunSummary> {
    let window_end = require_window_end(cfg)?;
    let loaded: Option<Model> = match &cfg.checkpoint {
        Some(path) => {
            let mut f = fs::File::open(path).map_err(|e| ConfigError(format!("checkpoint {}: {e}", path.display())))?;
            Some(read_checkpoint(&mut f).with_context(|| format!("reading {}", path.display()))?)
        }
        None => None,
    };
    let (mut run, universe) = Run::open(cfg, "dump-attention")?;
    let mut ok = 0;
    for s in &universe {
        let ticker = file_stem(s.ticker());
        let result = (|| -> deepsupp::Result<(Vec<_>, Option<Vec<u8>>)> {
            let sequence = sequence_of(cfg, s)?;
            if sequence.find(window_end).is_none() {
                return Err(deepsupp::Error::UnknownWindow(window_end));
            }
            let (model, checkpoint) = match &loaded {
                Some(m) => (m.clone(), None),
                None => {
                    let trained = train(&init_model(&cfg.deepsupp.model)?, &sequence, &cfg.deepsupp.model)?.model;
                    let mut bytes = Vec::new();
                    write_checkpoint(&trained, &mut bytes)?;
                    (trained, Some(bytes))
                }
            };
            Ok((export_attention_weights(&model, &sequence, window_end)?, checkpoint))
        })();
        match result {
            Ok((heads, checkpoint)) => {
                for (h, m) in heads.iter().enumerate() {
                    run.write(&format!("attention/{ticker}/w{window_end}/head{h}.csv"), matrix_to_csv(m).as_bytes())?;
                }
                if let Some(bytes) = checkpoint {
                    run.write(&format!("models/{ticker}.ckpt"), &bytes)?;
                }
                ok += 1;
            }
            Err(e) => run.summary.fail(s.ticker(), None, e),
        }
    }
    run.summary.report = format!("attention maps written for {ok} ticker(s)\n");
    run.finish()
}

/// Raw and MinMax-scaled feature matrices.
pub fn cmd_features_dump(cfg: &RunConfig) -> Result<RunSummary> {
    let (mut run, universe) = Run::open(cfg, "features dump")?;
    for s in &universe {
        match build_feature_matrix(s) {
            Ok(raw) => {
                let (scaled, _) = minmax_scale(&raw);
                let t = file_stem(s.ticker());
                run.write(&format!("features/{t}.raw.csv"), raw.to_csv().as_bytes())?;
                run.write(&format!("features/{t}.scaled.csv"), scaled.to_csv().as_bytes())?;
            }
            Err(e) => run.summary.fail(s.ticker(), None, e),
        }
    }
    run.finish()
}

/// One padded correlation matrix.
pub fn cmd_corr_dump(cfg: &RunConfig) -> Result<RunSummary> {
    let window_end = require_window_end(cfg)?;
    let (mut run, universe) = Run::open(cfg, "corr dump")?;
    for s in &universe {
        let found = sequence_of(cfg, s).and_then(|seq| {
            seq.find(window_end)
                .map(|m| padded_to_csv(&m.padded))
                .ok_or(deepsupp::Error::UnknownWindow(window_end))
        });
        match found {
            Ok(csv) => run.write(&format!("corr/{}.w{window_end}.csv", file_stem(s.ticker())), csv.as_bytes())?,
            Err(e) => run.summary.fail(s.ticker(), None, e),
        }
    }
    run.finish()
}

/// Scripted events of synthetic ticker `i`: a fixed mix rotated by `i`.
fn script(i: usize, per_level: usize) -> Vec<PlantedLevel> {
    use ScriptedOutcome::*;
    let mix = [Bounce, ShallowBreakRecovered, Bounce, Break, Bounce, ShallowBreakFailed];
    [90.0, 80.0]
        .iter()
        .enumerate()
        .map(|(l, &price)| PlantedLevel {
            price,
            events: (0..per_level)
                .map(|k| ScriptedEvent {
                    outcome: mix[(i + l * per_level + k) % mix.len()],
                    high_volume: (i + k) % 2 == 0,
                })
                .collect(),
        })
        .collect()
}

/// Synthetic tickers as CSV under `data/`; scripted series also get their
/// planted truth as JSON.
pub fn cmd_synth(cfg: &RunConfig) -> Result<RunSummary> {
    let o = &cfg.synth;
    if o.count == 0 || o.length < 2 {
        return Err(ConfigError("synth_count must be positive and synth_length at least 2".into()).into());
    }
    let mut run = Run::start(cfg, "synth")?;
    for i in 0..o.count {
        let ticker = format!("SYN{i:02}");
        let seed = cfg.seed.wrapping_add(i as u64);
        let (series, truth) = match o.kind {
            SynthKind::Bands => {
                let mut c = BandSeriesConfig::two_bands(seed);
                c.ticker = ticker.clone();
                let scale = 1.0 + 0.25 * i as f64;
                let halves = [o.length / 2, o.length - o.length / 2];
                for (seg, bars) in c.segments.iter_mut().zip(halves) {
                    seg.low *= scale;
                    seg.high *= scale;
                    seg.bars = bars;
                }
                c.segments.retain(|s| s.bars > 0);
                (generate_band_series(&c).map_err(ConfigError::from)?, None)
            }
            SynthKind::Scripted => {
                let per_level = ((o.length.saturating_sub(21)) / 16 / 2).min(4);
                let c = SyntheticConfig {
                    ticker: ticker.clone(),
                    length: o.length,
                    planted_levels: script(i, per_level),
                    noise_scale: o.noise_scale,
                    seed,
                    ..SyntheticConfig::default()
                };
                let (s, t) = generate_synthetic_series(&c).map_err(ConfigError::from)?;
                (s, Some(t))
            }
        };
        let mut csv = Vec::new();
        write_ohlcv_csv(&series, &mut csv)?;
        run.write(&format!("data/{ticker}.csv"), &csv)?;
        if let Some(t) = truth {
            run.write_json(&format!("data/{ticker}.truth.json"), &t)?;
        }
    }
    run.summary.report = format!("{} synthetic series written to {}\n", o.count, run.out.path("data")?.display());
    run.finish()
}
