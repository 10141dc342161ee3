//! Attention autoencoder over padded correlation matrices.
//!
//! The input is a `seq_len × embed_dim` matrix whose rows are treated as the
//! sequence positions. One multi-head self-attention block (no positional
//! encoding) with a residual connection and per-position layer norm feeds a
//! mean pool over positions, an `embed → hidden → bottleneck` encoder, and a
//! mirrored decoder whose output is broadcast back to every position through
//! a learned element-wise affine map.
//!
//! Forward and backward passes are written out by hand; [`gradient_check`]
//! verifies them against central finite differences.

mod checkpoint;
mod params;
mod reference;
mod train;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrSequence, MODEL_DIM};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::Params;
pub use reference::{reference_loss, DoubleDouble};
pub use train::{train, TrainedModel};

/// Added to the per-position variance inside layer norm.
pub const LAYER_NORM_EPS: f64 = 1e-9;
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub heads: usize,
    pub embed_dim: usize,
    pub seq_len: usize,
    pub bottleneck_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            heads: 4,
            embed_dim: MODEL_DIM,
            seq_len: MODEL_DIM,
            bottleneck_dim: 16,
            hidden_dim: 24,
            seed: 0,
            learning_rate: 0.5,
            momentum: 0.9,
            epochs: 100,
            batch_size: 32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!(
                "embed_dim {} must be divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.bottleneck_dim == 0 || self.bottleneck_dim >= self.embed_dim {
            return bad(format!(
                "bottleneck_dim {} must be in 1..embed_dim ({})",
                self.bottleneck_dim, self.embed_dim
            ));
        }
        if self.hidden_dim == 0 || self.seq_len == 0 {
            return bad("hidden_dim and seq_len must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub window_end: usize,
    pub values: Vec<f64>,
}

/// Draws every weight and bias uniformly from `±1/√fan_in` of its layer.
/// Element-wise affine maps (layer-norm and output broadcast) start at the
/// identity: gain 1, bias 0.
pub fn init_model(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (d, dh, h, b, l) = (
        config.embed_dim,
        config.head_dim(),
        config.hidden_dim,
        config.bottleneck_dim,
        config.seq_len,
    );
    let mut mat = |rows: usize, cols: usize, fan_in: usize| -> Array2<f64> {
        let scale = 1.0 / (fan_in as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..=scale))
    };
    let mut heads_q = Vec::new();
    let mut heads_k = Vec::new();
    let mut heads_v = Vec::new();
    for _ in 0..config.heads {
        heads_q.push(mat(d, dh, d));
        heads_k.push(mat(d, dh, d));
        heads_v.push(mat(d, dh, d));
    }
    let wo = mat(d, d, d);
    let enc1_w = mat(h, d, d);
    let enc1_b = mat(1, h, d).remove_axis(Axis(0));
    let enc2_w = mat(b, h, h);
    let enc2_b = mat(1, b, h).remove_axis(Axis(0));
    let dec1_w = mat(h, b, b);
    let dec1_b = mat(1, h, b).remove_axis(Axis(0));
    let dec2_w = mat(d, h, h);
    let dec2_b = mat(1, d, h).remove_axis(Axis(0));
    Ok(Model {
        config: config.clone(),
        params: Params {
            wq: heads_q,
            wk: heads_k,
            wv: heads_v,
            wo,
            ln_gain: Array1::ones(d),
            ln_bias: Array1::zeros(d),
            enc1_w,
            enc1_b,
            enc2_w,
            enc2_b,
            dec1_w,
            dec1_b,
            dec2_w,
            dec2_b,
            bcast_scale: Array2::ones((l, d)),
            bcast_bias: Array2::zeros((l, d)),
        },
    })
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    x: Array2<f64>,
    q: Vec<Array2<f64>>,
    k: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    /// Attention maps, one `seq_len × seq_len` row-stochastic matrix per head.
    pub attention: Vec<Array2<f64>>,
    concat: Array2<f64>,
    normed: Array2<f64>,
    rstd: Array1<f64>,
    /// Output of the attention block (after layer norm gain and bias).
    pub attended: Array2<f64>,
    pooled: Array1<f64>,
    enc_pre: Array1<f64>,
    enc_hidden: Array1<f64>,
    pub embedding: Array1<f64>,
    dec_pre: Array1<f64>,
    dec_hidden: Array1<f64>,
    decoded: Array1<f64>,
    pub reconstruction: Array2<f64>,
}

fn relu(x: &Array1<f64>) -> Array1<f64> {
    x.mapv(|v| v.max(0.0))
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

impl Model {
    fn check_input(&self, input: &Array2<f64>) -> Result<()> {
        let want = (self.config.seq_len, self.config.embed_dim);
        if input.dim() != want {
            return Err(Error::Config(format!(
                "input shape {:?} does not match model {:?}",
                input.dim(),
                want
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("multi-head attention"));
        }
        Ok(())
    }

    /// Attention block output and per-head attention maps.
    pub fn multi_head_attention(&self, input: &Array2<f64>) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
        self.check_input(input)?;
        let (attended, attention, ..) = self.attention_block(input);
        Ok((attended, attention))
    }

    #[allow(clippy::type_complexity)]
    fn attention_block(
        &self,
        x: &Array2<f64>,
    ) -> (
        Array2<f64>,
        Vec<Array2<f64>>,
        Vec<Array2<f64>>,
        Vec<Array2<f64>>,
        Vec<Array2<f64>>,
        Array2<f64>,
        Array2<f64>,
        Array1<f64>,
    ) {
        let p = &self.params;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (l, d) = x.dim();
        let mut concat = Array2::zeros((l, d));
        let (mut qs, mut ks, mut vs, mut maps) = (vec![], vec![], vec![], vec![]);
        for h in 0..self.config.heads {
            let q = x.dot(&p.wq[h]);
            let k = x.dot(&p.wk[h]);
            let v = x.dot(&p.wv[h]);
            let mut a = q.dot(&k.t()) * scale;
            softmax_rows(&mut a);
            concat.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&a.dot(&v));
            qs.push(q);
            ks.push(k);
            vs.push(v);
            maps.push(a);
        }
        let resid = x + &concat.dot(&p.wo);
        let mut normed = Array2::zeros((l, d));
        let mut rstd = Array1::zeros(l);
        for (i, row) in resid.rows().into_iter().enumerate() {
            let mean = row.mean().unwrap_or(0.0);
            let var = row.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0);
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = r;
            normed.row_mut(i).assign(&row.mapv(|v| (v - mean) * r));
        }
        let attended = &normed * &p.ln_gain + &p.ln_bias;
        (attended, maps, qs, ks, vs, concat, normed, rstd)
    }

    pub fn forward(&self, input: &Array2<f64>) -> Result<Forward> {
        self.check_input(input)?;
        let p = &self.params;
        let (attended, attention, q, k, v, concat, normed, rstd) = self.attention_block(input);
        let pooled = attended.mean_axis(Axis(0)).expect("non-empty sequence");
        let enc_pre = p.enc1_w.dot(&pooled) + &p.enc1_b;
        let enc_hidden = relu(&enc_pre);
        let embedding = p.enc2_w.dot(&enc_hidden) + &p.enc2_b;
        let (dec_pre, dec_hidden, decoded, reconstruction) = self.decode_parts(&embedding);
        Ok(Forward {
            x: input.clone(),
            q,
            k,
            v,
            attention,
            concat,
            normed,
            rstd,
            attended,
            pooled,
            enc_pre,
            enc_hidden,
            embedding,
            dec_pre,
            dec_hidden,
            decoded,
            reconstruction,
        })
    }

    fn decode_parts(&self, z: &Array1<f64>) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array2<f64>) {
        let p = &self.params;
        let dec_pre = p.dec1_w.dot(z) + &p.dec1_b;
        let dec_hidden = relu(&dec_pre);
        let decoded = p.dec2_w.dot(&dec_hidden) + &p.dec2_b;
        let recon = &p.bcast_scale * &decoded + &p.bcast_bias;
        (dec_pre, dec_hidden, decoded, recon)
    }

    /// Bottleneck embedding of one input matrix.
    pub fn encode(&self, input: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward(input)?.embedding)
    }

    pub fn decode(&self, embedding: &Array1<f64>) -> Result<Array2<f64>> {
        if embedding.len() != self.config.bottleneck_dim {
            return Err(Error::Config(format!(
                "embedding length {} != bottleneck_dim {}",
                embedding.len(),
                self.config.bottleneck_dim
            )));
        }
        Ok(self.decode_parts(embedding).3)
    }

    /// Mean squared reconstruction error.
    pub fn loss(&self, input: &Array2<f64>) -> Result<f64> {
        let f = self.forward(input)?;
        Ok(mse(&f.reconstruction, input))
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, input: &Array2<f64>) -> Result<(f64, Params)> {
        let f = self.forward(input)?;
        let loss = mse(&f.reconstruction, input);
        Ok((loss, self.backward(&f)))
    }

    fn backward(&self, f: &Forward) -> Params {
        let p = &self.params;
        let cfg = &self.config;
        let (l, d) = f.x.dim();
        let dh = cfg.head_dim();
        let mut g = Params::zeros_like(p);

        // Loss and broadcast.
        let d_recon = (&f.reconstruction - &f.x) * (2.0 / (l * d) as f64);
        g.bcast_bias.assign(&d_recon);
        g.bcast_scale.assign(&(&d_recon * &f.decoded));
        let d_decoded = (&d_recon * &p.bcast_scale).sum_axis(Axis(0));

        // Decoder.
        g.dec2_b.assign(&d_decoded);
        g.dec2_w.assign(&outer(&d_decoded, &f.dec_hidden));
        let d_dec_pre = p.dec2_w.t().dot(&d_decoded) * f.dec_pre.mapv(|v| f64::from(v > 0.0));
        g.dec1_b.assign(&d_dec_pre);
        g.dec1_w.assign(&outer(&d_dec_pre, &f.embedding));
        let d_embedding = p.dec1_w.t().dot(&d_dec_pre);

        // Encoder.
        g.enc2_b.assign(&d_embedding);
        g.enc2_w.assign(&outer(&d_embedding, &f.enc_hidden));
        let d_enc_pre = p.enc2_w.t().dot(&d_embedding) * f.enc_pre.mapv(|v| f64::from(v > 0.0));
        g.enc1_b.assign(&d_enc_pre);
        g.enc1_w.assign(&outer(&d_enc_pre, &f.pooled));
        let d_pooled = p.enc1_w.t().dot(&d_enc_pre) / l as f64;

        // Layer norm; every position receives the same upstream gradient.
        g.ln_bias.assign(&(&d_pooled * l as f64));
        g.ln_gain.assign(&(f.normed.sum_axis(Axis(0)) * &d_pooled));
        let d_normed_row = &d_pooled * &p.ln_gain;
        let mut d_resid = Array2::zeros((l, d));
        for i in 0..l {
            let n = f.normed.row(i);
            let mean_dn = d_normed_row.mean().unwrap_or(0.0);
            let mean_dn_n = (&d_normed_row * &n).mean().unwrap_or(0.0);
            let row = (&d_normed_row - mean_dn - &n * mean_dn_n) * f.rstd[i];
            d_resid.row_mut(i).assign(&row);
        }

        // Output projection and heads.
        g.wo.assign(&f.concat.t().dot(&d_resid));
        let d_concat = d_resid.dot(&p.wo.t());
        let scale = 1.0 / (dh as f64).sqrt();
        for h in 0..cfg.heads {
            let d_out = d_concat.slice(s![.., h * dh..(h + 1) * dh]);
            let a = &f.attention[h];
            let d_a = d_out.dot(&f.v[h].t());
            let d_v = a.t().dot(&d_out);
            let mut d_scores = Array2::zeros((l, l));
            for i in 0..l {
                let ar = a.row(i);
                let dar = d_a.row(i);
                let dot = ar.dot(&dar);
                d_scores.row_mut(i).assign(&(&ar * &(&dar - dot)));
            }
            let d_q = d_scores.dot(&f.k[h]) * scale;
            let d_k = d_scores.t().dot(&f.q[h]) * scale;
            g.wq[h].assign(&f.x.t().dot(&d_q));
            g.wk[h].assign(&f.x.t().dot(&d_k));
            g.wv[h].assign(&f.x.t().dot(&d_v));
        }
        g
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).mapv(|v| v * v).mean().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub samples: usize,
    /// Tensor names that received at least one sample.
    pub tensors_covered: Vec<String>,
}

/// Compares the analytic gradient of the reconstruction loss with central
/// differences on `samples` parameters (at least one per tensor, the rest
/// drawn at random). Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// The difference quotient is taken on [`reference_loss`], which runs in
/// double-double arithmetic: in plain `f64` the cancellation noise of a
/// 1e-5 step is around `1e-16 * loss / 1e-5`, larger than the 1e-4 relative
/// tolerance for the smallest attention-projection gradients.
pub fn gradient_check(
    model: &Model,
    input: &Array2<f64>,
    samples: usize,
    seed: u64,
) -> Result<GradientCheckReport> {
    let (_, analytic) = model.loss_and_gradient(input)?;
    let sizes: Vec<(String, usize)> = model
        .params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(ti, (_, len))| (ti, rng.random_range(0..*len)))
        .collect();
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    while picks.len() < samples {
        let mut flat = rng.random_range(0..total);
        let mut ti = 0;
        while flat >= sizes[ti].1 {
            flat -= sizes[ti].1;
            ti += 1;
        }
        picks.push((ti, flat));
    }

    let grads = analytic.tensors();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for &(ti, idx) in &picks {
        let original = model.params.tensors()[ti].1[idx];
        probe.params.set(ti, idx, original + GRADIENT_CHECK_STEP);
        let plus = reference_loss(&probe, input);
        probe.params.set(ti, idx, original - GRADIENT_CHECK_STEP);
        let minus = reference_loss(&probe, input);
        probe.params.set(ti, idx, original);
        let numeric = ((plus - minus) / DoubleDouble::from(2.0 * GRADIENT_CHECK_STEP)).to_f64();
        let a = grads[ti].1[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    let mut covered: Vec<String> = picks.iter().map(|&(ti, _)| sizes[ti].0.clone()).collect();
    covered.sort();
    covered.dedup();
    Ok(GradientCheckReport {
        max_relative_error: worst,
        samples: picks.len(),
        tensors_covered: covered,
    })
}

pub fn embed_sequence(model: &Model, sequence: &CorrSequence) -> Result<Vec<Embedding>> {
    embed_sequence_with(model, sequence, Execution::default())
}

/// One embedding per window, in sequence order.
pub fn embed_sequence_with(
    model: &Model,
    sequence: &CorrSequence,
    exec: Execution,
) -> Result<Vec<Embedding>> {
    exec::map(exec, &sequence.matrices, |m| {
        model.encode(&m.padded).map(|e| Embedding {
            window_end: m.window_end,
            values: e.to_vec(),
        })
    })
    .into_iter()
    .collect()
}

/// Attention maps of every head for one window.
pub fn export_attention_weights(
    model: &Model,
    sequence: &CorrSequence,
    window_end: usize,
) -> Result<Vec<Array2<f64>>> {
    let m = sequence
        .find(window_end)
        .ok_or(Error::UnknownWindow(window_end))?;
    Ok(model.multi_head_attention(&m.padded)?.1)
}

/// Row-major CSV with full float precision.
pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    crate::correlation::padded_to_csv(m)
}
