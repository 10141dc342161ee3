//! Flat `key=value` run configuration.
//!
//! Values come from the built-in defaults, then an optional config file, then
//! command-line flags of the same name. Every key is known up front; anything
//! else is rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use deepsupp::baselines::{detector_keys, Detector, DetectorSpec};
use deepsupp::clustering::DeepSuppConfig;
use deepsupp::evaluation::{EvaluationConfig, MetricWeights};
use deepsupp::Execution;

/// A problem with the configuration itself, detected before any work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<deepsupp::Error> for ConfigError {
    fn from(e: deepsupp::Error) -> Self {
        ConfigError(e.to_string())
    }
}

type ConfigResult<T> = std::result::Result<T, ConfigError>;

pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    default: fn() -> String,
    /// Recorded in the run manifest.
    pub in_manifest: bool,
}

fn ds() -> DeepSuppConfig {
    DeepSuppConfig::default()
}

fn ev() -> EvaluationConfig {
    EvaluationConfig::default()
}

macro_rules! key {
    ($name:literal, $help:literal, $default:expr) => {
        Key { name: $name, help: $help, default: || $default.to_string(), in_manifest: true }
    };
    ($name:literal, $help:literal, $default:expr, local) => {
        Key { name: $name, help: $help, default: || $default.to_string(), in_manifest: false }
    };
}

pub static KEYS: &[Key] = &[
    key!("data_dir", "Directory of per-ticker CSV files named TICKER.csv", ""),
    key!("output_dir", "Directory receiving every output of the run", "out", local),
    key!("tickers", "Comma-separated tickers to process (empty: every CSV in data_dir)", ""),
    key!("methods", "Comma-separated detector specs, e.g. deepsupp,moving_average:windows=20/50", "deepsupp"),
    key!("seed", "Seed for model initialisation, training order and HMM start", 0),
    key!("jobs", "Worker threads (0: one per core, 1: sequential)", 0, local),
    key!("window", "Rolling correlation window in bars", ds().window),
    key!("stride", "Bars between consecutive correlation windows", ds().stride),
    key!("eps", "DBSCAN neighbourhood radius", ds().eps),
    key!("min_samples", "DBSCAN core threshold (auto: 10% of windows, at least 2)", "auto"),
    key!("heads", "Attention heads", ds().model.heads),
    key!("bottleneck_dim", "Embedding size", ds().model.bottleneck_dim),
    key!("hidden_dim", "Encoder and decoder hidden width", ds().model.hidden_dim),
    key!("learning_rate", "SGD learning rate", ds().model.learning_rate),
    key!("momentum", "SGD momentum", ds().model.momentum),
    key!("epochs", "Training epochs", ds().model.epochs),
    key!("batch_size", "Training mini-batch size", ds().model.batch_size),
    key!("touch_tolerance", "Relative half-width of the touch band", ev().events.touch_tolerance),
    key!("horizon", "Bars after a touch that decide its outcome", ev().events.horizon),
    key!("break_tolerance", "Relative depth separating shallow from deep breaks", ev().events.break_tolerance),
    key!("bounce_recovery", "Relative gain over the touch low that counts as a bounce", ev().events.bounce_recovery),
    key!("collapse_bars", "Touches within this many bars fold into one event", ev().events.collapse_bars),
    key!("volume_threshold", "Volume ratio confirming a bounce", ev().volume_threshold),
    key!("regime_window", "Trailing bars of the regime return", ev().regime_window),
    key!("regime_threshold", "Return separating bull and bear from sideways", ev().regime_threshold),
    key!("weights", "Six comma-separated metric weights summing to 1", weights_to_string(&MetricWeights::default())),
    key!("window_end", "Exclusive end bar of the window to dump (corr dump, dump-attention)", ""),
    key!("checkpoint", "Model checkpoint to load instead of training (dump-attention)", ""),
    key!("synth_kind", "Synthetic family: bands or scripted", "bands"),
    key!("synth_count", "Number of synthetic tickers", 3),
    key!("synth_length", "Bars per synthetic ticker", 300),
    key!("noise_scale", "Relative price noise of scripted series", 0.005),
];

fn weights_to_string(w: &MetricWeights) -> String {
    w.to_array().map(|x| x.to_string()).join(",")
}

pub fn key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// `key = value` lines; blank lines and lines starting with `#` are ignored.
pub fn parse_config_text(text: &str, origin: &str) -> ConfigResult<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("{origin}:{}: expected key=value", i + 1)))?;
        let k = k.trim();
        if key(k).is_none() {
            return Err(ConfigError(format!("{origin}:{}: unknown key {k:?}", i + 1)));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(ConfigError(format!("{origin}:{}: key {k:?} given twice", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Bands,
    Scripted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub kind: SynthKind,
    pub count: usize,
    pub length: usize,
    pub noise_scale: f64,
}

/// Fully resolved and validated configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub tickers: Vec<String>,
    /// Global keys that change a detector are folded into its spec.
    pub methods: Vec<DetectorSpec>,
    pub seed: u64,
    pub jobs: usize,
    pub deepsupp: DeepSuppConfig,
    pub evaluation: EvaluationConfig,
    pub window_end: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub synth: SynthOptions,
    values: Vec<(&'static str, String)>,
}

fn parse<T: std::str::FromStr>(name: &str, v: &str) -> ConfigResult<T> {
    v.parse().map_err(|_| ConfigError(format!("{name}: cannot parse {v:?}")))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn optional_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Adds each global key the detector accepts and does not set itself, when
/// doing so changes the detector.
fn fold_globals(spec: DetectorSpec, values: &[(&'static str, String)]) -> ConfigResult<DetectorSpec> {
    let accepted = detector_keys(&spec.name).ok_or_else(|| ConfigError(spec.build().unwrap_err().to_string()))?;
    let mut spec = spec;
    let mut current: Detector = spec.build()?;
    for &k in accepted {
        if spec.params.contains_key(k) || key(k).is_none() {
            continue;
        }
        let v = lookup(values, k);
        if k == "min_samples" && v == "auto" {
            continue;
        }
        let candidate = spec.clone().with(k, v);
        let built = candidate.build().map_err(|e| ConfigError(format!("{k}={v}: {e}")))?;
        if built != current {
            spec = candidate;
            current = built;
        }
    }
    Ok(spec)
}

fn lookup<'v>(values: &'v [(&'static str, String)], k: &str) -> &'v str {
    values
        .iter()
        .find(|(name, _)| *name == k)
        .map(|(_, v)| v.as_str())
        .expect("registered key")
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides` (later entries win).
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> ConfigResult<RunConfig> {
        let mut values: Vec<(&'static str, String)> = KEYS.iter().map(|k| (k.name, (k.default)())).collect();
        let mut set = |k: &str, v: String| -> ConfigResult<()> {
            let slot = values
                .iter_mut()
                .find(|(name, _)| *name == k)
                .ok_or_else(|| ConfigError(format!("unknown key {k:?}")))?;
            slot.1 = v;
            Ok(())
        };
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            for (k, v) in parse_config_text(&text, &path.display().to_string())? {
                set(&k, v)?;
            }
        }
        for (k, v) in overrides {
            set(k, v.clone())?;
        }
        RunConfig::from_values(values)
    }

    fn from_values(values: Vec<(&'static str, String)>) -> ConfigResult<RunConfig> {
        let get = |k: &str| lookup(&values, k).to_string();
        let u = |k: &str| parse::<usize>(k, &get(k));
        let f = |k: &str| parse::<f64>(k, &get(k));

        let weights: Vec<f64> = list(&get("weights")).iter().map(|w| parse("weights", w)).collect::<ConfigResult<_>>()?;
        let weights: [f64; 6] = weights
            .try_into()
            .map_err(|w: Vec<f64>| ConfigError(format!("weights: expected 6 values, got {}", w.len())))?;
        let weights = MetricWeights::from_array(weights);
        weights.validate()?;

        let mut evaluation = EvaluationConfig {
            weights,
            volume_threshold: f("volume_threshold")?,
            regime_window: u("regime_window")?,
            regime_threshold: f("regime_threshold")?,
            ..EvaluationConfig::default()
        };
        evaluation.events.touch_tolerance = f("touch_tolerance")?;
        evaluation.events.horizon = u("horizon")?;
        evaluation.events.break_tolerance = f("break_tolerance")?;
        evaluation.events.bounce_recovery = f("bounce_recovery")?;
        evaluation.events.collapse_bars = u("collapse_bars")?;
        let ev = &evaluation.events;
        if !(ev.touch_tolerance >= 0.0 && ev.touch_tolerance < ev.break_tolerance && ev.break_tolerance < 1.0) {
            return Err(ConfigError("need 0 <= touch_tolerance < break_tolerance < 1".into()));
        }
        if !(ev.bounce_recovery > 0.0) || ev.horizon == 0 {
            return Err(ConfigError("bounce_recovery and horizon must be positive".into()));
        }
        if !(evaluation.regime_threshold >= 0.0) || !(evaluation.volume_threshold >= 0.0) {
            return Err(ConfigError("regime_threshold and volume_threshold must be non-negative".into()));
        }

        let mut methods = Vec::new();
        for m in list(&get("methods")) {
            let spec: DetectorSpec = m.parse()?;
            methods.push(fold_globals(spec, &values)?);
        }
        if methods.is_empty() {
            return Err(ConfigError("methods: at least one detector is required".into()));
        }
        let deepsupp = match fold_globals(DetectorSpec::new("deepsupp"), &values)?.build()? {
            Detector::DeepSupp(c) => c,
            _ => unreachable!("deepsupp spec builds a deepsupp detector"),
        };

        let synth = SynthOptions {
            kind: match get("synth_kind").as_str() {
                "bands" => SynthKind::Bands,
                "scripted" => SynthKind::Scripted,
                other => return Err(ConfigError(format!("synth_kind: {other:?} is not bands or scripted"))),
            },
            count: u("synth_count")?,
            length: u("synth_length")?,
            noise_scale: f("noise_scale")?,
        };

        let window_end = match get("window_end").as_str() {
            "" => None,
            v => Some(parse("window_end", v)?),
        };
        let data_dir = optional_path(&get("data_dir"));
        let output_dir = PathBuf::from(get("output_dir"));
        let tickers = list(&get("tickers"));
        let seed = parse("seed", &get("seed"))?;
        let jobs = u("jobs")?;
        let checkpoint = optional_path(&get("checkpoint"));
        Ok(RunConfig {
            data_dir,
            output_dir,
            tickers,
            seed,
            jobs,
            checkpoint,
            methods,
            deepsupp,
            evaluation,
            window_end,
            synth,
            values,
        })
    }

    pub fn execution(&self) -> Execution {
        if self.jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn value(&self, name: &str) -> Option<&str> {
        self.values.iter().find(|(k, _)| *k == name).map(|(_, v)| v.as_str())
    }

    /// Every manifest key with its resolved value, in registry order. The
    /// detector list is written with its folded parameters and the data
    /// directory as an absolute path, so the manifest reproduces the run from
    /// any working directory.
    pub fn manifest(&self, command: &str) -> String {
        let mut out = format!("# deepsupp run manifest\n# command: {command}\n");
        for k in KEYS.iter().filter(|k| k.in_manifest) {
            let v = match k.name {
                "methods" => self.methods.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
                "data_dir" => match &self.data_dir {
                    Some(d) => fs::canonicalize(d).unwrap_or_else(|_| d.clone()).display().to_string(),
                    None => String::new(),
                },
                name => self.value(name).unwrap_or_default().to_string(),
            };
            out.push_str(&format!("{}={v}\n", k.name));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn over(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::resolve(None, &[]).unwrap();
        assert_eq!(c.methods, vec![DetectorSpec::new("deepsupp")]);
        assert_eq!(c.deepsupp, DeepSuppConfig::default());
        assert_eq!(c.evaluation, EvaluationConfig::default());
        assert_eq!(c.execution(), Execution::Parallel);
    }

    #[test]
    fn globals_fold_into_specs_only_when_they_matter() {
        let c = RunConfig::resolve(
            None,
            &over(&[("methods", "deepsupp,hmm,fractal,deepsupp:eps=0.1"), ("eps", "0.05"), ("seed", "7"), ("window", "32")]),
        )
        .unwrap();
        let names: Vec<String> = c.methods.iter().map(ToString::to_string).collect();
        assert_eq!(names, ["deepsupp:eps=0.05;seed=7", "hmm:seed=7", "fractal", "deepsupp:eps=0.1;seed=7"]);
        assert_eq!(c.deepsupp.eps, 0.05);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = RunConfig::resolve(None, &over(&[("weights", "0.25,0.2,0.2,0.15,0.05,0.05")])).unwrap_err();
        assert!(err.0.contains("sum"), "{err}");
        assert!(RunConfig::resolve(None, &over(&[("weights", "0.5,0.5")])).is_err());
        let same = RunConfig::resolve(None, &over(&[("weights", "0.25,0.20,0.20,0.15,0.15,0.05")])).unwrap();
        assert_eq!(same.evaluation.weights, MetricWeights::default());
    }

    #[test]
    fn bad_values_and_keys_rejected() {
        for (k, v) in [("eps", "x"), ("eps", "-1"), ("methods", "bogus"), ("synth_kind", "other"), ("touch_tolerance", "0.5"), ("heads", "5")] {
            assert!(RunConfig::resolve(None, &over(&[(k, v)])).is_err(), "{k}={v}");
        }
        assert!(RunConfig::resolve(None, &over(&[("nonsense", "1")])).is_err());
        assert!(parse_config_text("nonsense = 1\n", "f").is_err());
        assert!(parse_config_text("eps\n", "f").is_err());
        assert!(parse_config_text("eps=1\neps=2\n", "f").is_err());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\n\nmethods = fractal, local_minima:order=3\neps=0.05\nhorizon = 12\n").unwrap();
        let c = RunConfig::resolve(Some(&path), &over(&[("horizon", "8")])).unwrap();
        assert_eq!(c.methods[1].to_string(), "local_minima:order=3");
        assert_eq!(c.evaluation.events.horizon, 8);
        assert_eq!(c.deepsupp.eps, 0.05);
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::resolve(None, &over(&[("methods", "deepsupp,hmm"), ("seed", "3"), ("output_dir", "elsewhere"), ("jobs", "2")]))
            .unwrap();
        let text = c.manifest("compare");
        assert!(!text.contains("output_dir") && !text.contains("jobs="));
        let path = dir.path().join("m.cfg");
        fs::write(&path, &text).unwrap();
        let again = RunConfig::resolve(Some(&path), &[]).unwrap();
        assert_eq!(again.manifest("compare"), text);
        assert_eq!(again.methods, c.methods);
    }
}
