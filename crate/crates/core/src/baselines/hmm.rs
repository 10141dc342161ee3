use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{SupportLevel, SupportLevelSet};
use crate::error::{Error, Result};
use crate::market_data::BarSeries;

pub const HMM_MIN_BARS: usize = 60;
pub const HMM_LEVEL_PERCENTILE: f64 = 10.0;
const CONVERGENCE_TOLERANCE: f64 = 1e-8;
const VARIANCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub states: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for HmmParams {
    fn default() -> Self {
        HmmParams {
            states: 3,
            iterations: 50,
            seed: 0,
        }
    }
}

/// A fitted Gaussian HMM and the Viterbi path of its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmFit {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub path: Vec<usize>,
}

#[derive(Clone)]
struct Model {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl Model {
    /// Log densities of every state at every observation.
    fn log_emissions(&self, obs: &[f64]) -> Vec<Vec<f64>> {
        obs.iter()
            .map(|&x| {
                self.means
                    .iter()
                    .zip(&self.variances)
                    .map(|(m, v)| -0.5 * ((x - m).powi(2) / v + (2.0 * std::f64::consts::PI * v).ln()))
                    .collect()
            })
            .collect()
    }
}

struct Posterior {
    log_likelihood: f64,
    gamma: Vec<Vec<f64>>,
    xi_sum: Vec<Vec<f64>>,
}

/// Scaled forward-backward pass. Emissions are shifted by their per-step
/// maximum so no state underflows.
fn posterior(model: &Model, obs: &[f64]) -> Posterior {
    let k = model.means.len();
    let n = obs.len();
    let log_b = model.log_emissions(obs);
    let mut shift = vec![0.0; n];
    let b: Vec<Vec<f64>> = log_b
        .iter()
        .enumerate()
        .map(|(t, row)| {
            shift[t] = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter().map(|l| (l - shift[t]).exp()).collect()
        })
        .collect();

    let mut alpha = vec![vec![0.0; k]; n];
    let mut scale = vec![0.0; n];
    for t in 0..n {
        for j in 0..k {
            let prior = if t == 0 {
                model.initial[j]
            } else {
                (0..k).map(|i| alpha[t - 1][i] * model.transition[i][j]).sum()
            };
            alpha[t][j] = prior * b[t][j];
        }
        scale[t] = alpha[t].iter().sum::<f64>();
        for a in &mut alpha[t] {
            *a /= scale[t];
        }
    }
    let mut beta = vec![vec![1.0; k]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        for i in 0..k {
            beta[t][i] = (0..k)
                .map(|j| model.transition[i][j] * b[t + 1][j] * beta[t + 1][j])
                .sum::<f64>()
                / scale[t + 1];
        }
    }
    let gamma = (0..n)
        .map(|t| {
            let g: Vec<f64> = (0..k).map(|i| alpha[t][i] * beta[t][i]).collect();
            let s: f64 = g.iter().sum();
            g.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut xi_sum = vec![vec![0.0; k]; k];
    for t in 0..n.saturating_sub(1) {
        for i in 0..k {
            for j in 0..k {
                xi_sum[i][j] += alpha[t][i] * model.transition[i][j] * b[t + 1][j] * beta[t + 1][j] / scale[t + 1];
            }
        }
    }
    Posterior {
        log_likelihood: scale.iter().zip(&shift).map(|(c, m)| c.ln() + m).sum(),
        gamma,
        xi_sum,
    }
}

fn reestimate(model: &Model, obs: &[f64], post: &Posterior, var_floor: f64) -> Model {
    let k = model.means.len();
    let n = obs.len();
    let mut next = model.clone();
    next.initial = post.gamma[0].clone();
    for i in 0..k {
        let occupancy: f64 = post.gamma.iter().map(|g| g[i]).sum();
        let leaving: f64 = post.gamma[..n - 1].iter().map(|g| g[i]).sum();
        if leaving > 0.0 {
            let row: Vec<f64> = post.xi_sum[i].iter().map(|x| x / leaving).collect();
            let total: f64 = row.iter().sum();
            next.transition[i] = row.into_iter().map(|x| x / total).collect();
        }
        if occupancy > 1e-12 {
            let mean = post.gamma.iter().zip(obs).map(|(g, x)| g[i] * x).sum::<f64>() / occupancy;
            let var = post.gamma.iter().zip(obs).map(|(g, x)| g[i] * (x - mean).powi(2)).sum::<f64>() / occupancy;
            next.means[i] = mean;
            next.variances[i] = var.max(var_floor);
        }
    }
    next
}

fn viterbi(model: &Model, obs: &[f64]) -> Vec<usize> {
    let k = model.means.len();
    let log_b = model.log_emissions(obs);
    let log_a: Vec<Vec<f64>> = model.transition.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let mut delta: Vec<f64> = (0..k).map(|j| model.initial[j].ln() + log_b[0][j]).collect();
    let mut back = vec![vec![0usize; k]; obs.len()];
    for t in 1..obs.len() {
        let mut next = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            for i in 0..k {
                let v = delta[i] + log_a[i][j];
                if v > next[j] {
                    next[j] = v;
                    back[t][j] = i;
                }
            }
            next[j] += log_b[t][j];
        }
        delta = next;
    }
    let mut state = (0..k).fold(0, |best, j| if delta[j] > delta[best] { j } else { best });
    let mut path = vec![0; obs.len()];
    for t in (0..obs.len()).rev() {
        path[t] = state;
        state = back[t][state];
    }
    path
}

/// Baum-Welch on `obs` from a seeded start, keeping the iterate with the
/// highest likelihood. A series with (numerically) no variation is fitted
/// by a single state.
pub fn fit_hmm(obs: &[f64], params: &HmmParams) -> Result<HmmFit> {
    if obs.is_empty() || params.states == 0 {
        return Err(Error::Config("hmm needs observations and at least one state".into()));
    }
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("hmm"));
    }
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let k = if var <= 1e-20 { 1 } else { params.states };
    if k == 1 {
        return Ok(HmmFit {
            initial: vec![1.0],
            transition: vec![vec![1.0]],
            means: vec![mean],
            variances: vec![var],
            log_likelihood: 0.0,
            converged: true,
            path: vec![0; obs.len()],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sorted = obs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = var.sqrt();
    let means = (0..k)
        .map(|i| {
            let q = sorted[(((i as f64 + 0.5) / k as f64) * (obs.len() - 1) as f64).round() as usize];
            q + rng.random_range(-0.05..0.05) * sd
        })
        .collect();
    let transition = (0..k)
        .map(|i| {
            let row: Vec<f64> = (0..k)
                .map(|j| {
                    let base = if i == j { 0.8 } else { 0.2 / (k - 1) as f64 };
                    base * rng.random_range(0.9..1.1)
                })
                .collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut model = Model {
        initial: vec![1.0 / k as f64; k],
        transition,
        means,
        variances: vec![var; k],
    };
    let var_floor = VARIANCE_FLOOR * var;

    let mut best: Option<(f64, Model)> = None;
    let mut previous = f64::NEG_INFINITY;
    let mut converged = false;
    for _ in 0..params.iterations {
        let post = posterior(&model, obs);
        let ll = post.log_likelihood;
        if !ll.is_finite() {
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, model.clone()));
        }
        if (ll - previous).abs() <= CONVERGENCE_TOLERANCE * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
        previous = ll;
        model = reestimate(&model, obs, &post, var_floor);
    }
    if !converged {
        let ll = posterior(&model, obs).log_likelihood;
        if ll.is_finite() && best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, model.clone()));
        }
    }
    let (log_likelihood, model) = best.ok_or(Error::NonFinite("hmm likelihood"))?;
    let path = viterbi(&model, obs);
    Ok(HmmFit {
        initial: model.initial,
        transition: model.transition,
        means: model.means,
        variances: model.variances,
        log_likelihood,
        converged,
        path,
    })
}

/// Linear-interpolation percentile (`p` in 0..=100) of unsorted values.
pub(crate) fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Regimes from a Gaussian HMM on log returns; each occupied state yields
/// the 10th percentile of its closes.
pub fn detect_hmm(series: &BarSeries, params: &HmmParams) -> Result<SupportLevelSet> {
    if series.len() < HMM_MIN_BARS {
        return Err(Error::TooShort {
            what: "hmm",
            required: HMM_MIN_BARS,
            actual: series.len(),
        });
    }
    let closes = series.closes();
    let returns: Vec<f64> = closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let fit = fit_hmm(&returns, params)?;
    // Bar t > 0 carries the state of the return that ends on it.
    let state_of_bar = |t: usize| fit.path[t.saturating_sub(1)];
    let k = fit.means.len();
    let candidates = (0..k)
        .filter_map(|s| {
            let members: Vec<f64> = (0..closes.len()).filter(|&t| state_of_bar(t) == s).map(|t| closes[t]).collect();
            (!members.is_empty()).then(|| SupportLevel {
                price: percentile(&members, HMM_LEVEL_PERCENTILE),
                cluster_id: s as i64,
                member_count: members.len(),
                method: String::new(),
            })
        })
        .collect();
    let set = SupportLevelSet::from_candidates(series.ticker(), "hmm", candidates);
    Ok(if fit.converged {
        set
    } else {
        set.with_warning(format!(
            "hmm: Baum-Welch did not converge in {} iterations; using the best-likelihood iterate",
            params.iterations
        ))
    })
}
