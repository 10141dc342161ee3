//! Rule-based and statistical support detectors, and dispatch by name over
//! these and DeepSupp.

mod hmm;
mod quantile;
mod simple;

pub use hmm::{detect_hmm, fit_hmm, HmmFit, HmmParams};
pub use quantile::{detect_quantile_regression, quantile_fits, QuantileParams};
pub use simple::{
    detect_fibonacci, detect_fractal, detect_local_minima, detect_moving_average, merge_within, FibonacciParams,
    FractalParams, LocalMinimaParams, MovingAverageParams, FIBONACCI_RATIOS,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{detect_deepsupp, DeepSuppConfig, SupportLevelSet};
use crate::error::{Error, Result};
use crate::market_data::BarSeries;

pub const DETECTOR_NAMES: [&str; 7] = [
    "deepsupp",
    "hmm",
    "local_minima",
    "fractal",
    "fibonacci",
    "moving_average",
    "quantile_regression",
];

const DEEPSUPP_KEYS: &[&str] = &[
    "window",
    "stride",
    "eps",
    "min_samples",
    "seed",
    "heads",
    "bottleneck_dim",
    "hidden_dim",
    "learning_rate",
    "momentum",
    "epochs",
    "batch_size",
];

/// Parameter keys accepted by a detector, or `None` for an unknown name.
pub fn detector_keys(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "deepsupp" => DEEPSUPP_KEYS,
        "hmm" => &["states", "iterations", "seed"],
        "local_minima" => &["order", "merge_tolerance"],
        "fractal" => &["merge_tolerance"],
        "fibonacci" => &["lookback"],
        "moving_average" => &["windows"],
        "quantile_regression" => &["quantiles", "iterations", "ridge"],
        _ => return None,
    })
}

/// A detector name plus string parameters, written `name` or
/// `name:key=value;key=value`. List values separate items with `/`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl DetectorSpec {
    pub fn new(name: impl Into<String>) -> Self {
        DetectorSpec {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    /// Resolves the name and validates the parameters.
    pub fn build(&self) -> Result<Detector> {
        let p = Params::new(self);
        let d = match self.name.as_str() {
            "deepsupp" => Detector::DeepSupp(deepsupp_config(&p)?),
            "hmm" => Detector::Hmm(HmmParams {
                states: p.usize("states", HmmParams::default().states)?,
                iterations: p.usize("iterations", HmmParams::default().iterations)?,
                seed: p.u64("seed", HmmParams::default().seed)?,
            }),
            "local_minima" => Detector::LocalMinima(LocalMinimaParams {
                order: p.usize("order", LocalMinimaParams::default().order)?,
                merge_tolerance: p.f64("merge_tolerance", LocalMinimaParams::default().merge_tolerance)?,
            }),
            "fractal" => Detector::Fractal(FractalParams {
                merge_tolerance: p.f64("merge_tolerance", FractalParams::default().merge_tolerance)?,
            }),
            "fibonacci" => Detector::Fibonacci(FibonacciParams {
                lookback: match p.get("lookback") {
                    None => None,
                    Some(_) => Some(p.usize("lookback", 0)?),
                },
            }),
            "moving_average" => Detector::MovingAverage(MovingAverageParams {
                windows: p.list("windows", &MovingAverageParams::default().windows)?,
            }),
            "quantile_regression" => Detector::QuantileRegression(QuantileParams {
                quantiles: p.list("quantiles", &QuantileParams::default().quantiles)?,
                iterations: p.usize("iterations", QuantileParams::default().iterations)?,
                ridge: p.f64("ridge", QuantileParams::default().ridge)?,
            }),
            other => {
                return Err(Error::UnknownDetector {
                    name: other.to_string(),
                    valid: DETECTOR_NAMES.to_vec(),
                })
            }
        };
        p.finish()?;
        d.validate()?;
        Ok(d)
    }
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            write!(f, "{}{k}={v}", if i == 0 { ':' } else { ';' })?;
        }
        Ok(())
    }
}

impl FromStr for DetectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = DetectorSpec::new(name.trim());
        if spec.name.is_empty() {
            return Err(Error::Config(format!("empty detector name in {s:?}")));
        }
        for pair in rest.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("detector parameter {pair:?} is not key=value")))?;
            spec.params.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(spec)
    }
}

/// A validated detector ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    DeepSupp(DeepSuppConfig),
    Hmm(HmmParams),
    LocalMinima(LocalMinimaParams),
    Fractal(FractalParams),
    Fibonacci(FibonacciParams),
    MovingAverage(MovingAverageParams),
    QuantileRegression(QuantileParams),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::DeepSupp(_) => "deepsupp",
            Detector::Hmm(_) => "hmm",
            Detector::LocalMinima(_) => "local_minima",
            Detector::Fractal(_) => "fractal",
            Detector::Fibonacci(_) => "fibonacci",
            Detector::MovingAverage(_) => "moving_average",
            Detector::QuantileRegression(_) => "quantile_regression",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.name())));
        match self {
            Detector::DeepSupp(c) => {
                c.model.validate()?;
                if !(c.eps > 0.0) || c.window < 2 || c.stride == 0 || c.min_samples == Some(0) {
                    return bad("need eps > 0, window >= 2, stride >= 1, min_samples >= 1".into());
                }
            }
            Detector::Hmm(p) if p.states == 0 || p.iterations == 0 => {
                return bad("states and iterations must be positive".into())
            }
            Detector::LocalMinima(p) if p.order == 0 || !(p.merge_tolerance >= 0.0) => {
                return bad("order must be positive and merge_tolerance non-negative".into())
            }
            Detector::Fractal(p) if !(p.merge_tolerance >= 0.0) => {
                return bad("merge_tolerance must be non-negative".into())
            }
            Detector::Fibonacci(FibonacciParams { lookback: Some(n) }) if *n < 2 => {
                return bad("lookback must be at least 2".into())
            }
            Detector::MovingAverage(p) if p.windows.is_empty() || p.windows.contains(&0) => {
                return bad("windows must be a non-empty list of positive lengths".into())
            }
            Detector::QuantileRegression(p)
                if p.quantiles.is_empty()
                    || p.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0))
                    || p.iterations == 0
                    || !(p.ridge >= 0.0) =>
            {
                return bad("quantiles must lie in (0, 1), iterations > 0, ridge >= 0".into())
            }
            _ => {}
        }
        Ok(())
    }

    pub fn detect(&self, series: &BarSeries) -> Result<SupportLevelSet> {
        match self {
            Detector::DeepSupp(c) => detect_deepsupp(series, c),
            Detector::Hmm(p) => detect_hmm(series, p),
            Detector::LocalMinima(p) => detect_local_minima(series, p),
            Detector::Fractal(p) => detect_fractal(series, p),
            Detector::Fibonacci(p) => detect_fibonacci(series, p),
            Detector::MovingAverage(p) => detect_moving_average(series, p),
            Detector::QuantileRegression(p) => detect_quantile_regression(series, p),
        }
    }
}

/// Runs the named detector; failures carry the method and ticker.
pub fn run_detector(spec: &DetectorSpec, series: &BarSeries) -> Result<SupportLevelSet> {
    let detector = spec.build()?;
    detector.detect(series).map_err(|e| Error::Detector {
        method: spec.name.clone(),
        ticker: series.ticker().to_string(),
        source: Box::new(e),
    })
}

fn deepsupp_config(p: &Params) -> Result<DeepSuppConfig> {
    let d = DeepSuppConfig::default();
    let mut c = d.clone();
    c.window = p.usize("window", d.window)?;
    c.stride = p.usize("stride", d.stride)?;
    c.eps = p.f64("eps", d.eps)?;
    c.min_samples = match p.get("min_samples") {
        None => None,
        Some(_) => Some(p.usize("min_samples", 0)?),
    };
    let m = &mut c.model;
    m.seed = p.u64("seed", d.model.seed)?;
    m.heads = p.usize("heads", d.model.heads)?;
    m.bottleneck_dim = p.usize("bottleneck_dim", d.model.bottleneck_dim)?;
    m.hidden_dim = p.usize("hidden_dim", d.model.hidden_dim)?;
    m.learning_rate = p.f64("learning_rate", d.model.learning_rate)?;
    m.momentum = p.f64("momentum", d.model.momentum)?;
    m.epochs = p.usize("epochs", d.model.epochs)?;
    m.batch_size = p.usize("batch_size", d.model.batch_size)?;
    Ok(c)
}

/// Typed access to a spec's parameters that remembers which keys were read.
struct Params<'a> {
    spec: &'a DetectorSpec,
    used: std::cell::RefCell<Vec<&'a str>>,
}

impl<'a> Params<'a> {
    fn new(spec: &'a DetectorSpec) -> Self {
        Params {
            spec,
            used: Default::default(),
        }
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        let (k, v) = self.spec.params.get_key_value(key)?;
        self.used.borrow_mut().push(k);
        Some(v)
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::Config(format!("{}: cannot parse {key}={v:?}", self.spec.name))
            }),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        self.parse(key, default)
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64> {
        self.parse(key, default)
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse(key, default)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Config(format!("{}: {key} must be finite", self.spec.name)))
        }
    }

    fn list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split('/')
                .map(|item| {
                    item.trim().parse().map_err(|_| {
                        Error::Config(format!("{}: cannot parse {key} item {item:?}", self.spec.name))
                    })
                })
                .collect(),
        }
    }

    fn finish(self) -> Result<()> {
        let used = self.used.into_inner();
        let unknown: Vec<&str> = self
            .spec
            .params
            .keys()
            .map(String::as_str)
            .filter(|k| !used.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{}: unknown parameter(s) {}",
                self.spec.name,
                unknown.join(", ")
            )))
        }
    }
}
