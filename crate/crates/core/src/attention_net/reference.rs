//! Loop-based forward pass in double-double arithmetic.
//!
//! Shares no code with the `ndarray` forward pass. It serves as the loss
//! evaluator for finite-difference gradient checks and as an independent
//! check of the fast path.

use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::Array2;

use super::{Model, LAYER_NORM_EPS};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`: about 106 bits of
/// significand.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleDouble = DoubleDouble { hi: 1.0, lo: 0.0 };

    fn from_parts(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        DoubleDouble { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn mul_pow2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        DoubleDouble {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return DoubleDouble::ZERO;
        }
        let q = DoubleDouble::from(self.hi.sqrt());
        let r = self - q * q;
        q + DoubleDouble::from(r.hi / (2.0 * q.hi))
    }

    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return DoubleDouble::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        // Reduce to |r| <= ln2 / 2 / 1024, sum the series, square back up.
        let r = (self - LN2 * DoubleDouble::from(k)).mul_pow2(-10);
        let mut term = DoubleDouble::ONE;
        let mut sum = DoubleDouble::ONE;
        for n in 1..=12 {
            term = term * r / DoubleDouble::from(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.mul_pow2(k as i32)
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        DoubleDouble { hi: v, lo: 0.0 }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        DoubleDouble::from_parts(s, e + f)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        DoubleDouble::from_parts(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * DoubleDouble::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DoubleDouble::from(q2);
        let q3 = r.hi / o.hi;
        DoubleDouble::from_parts(q1, q2) + DoubleDouble::from(q3)
    }
}

type Mat = Vec<Vec<DoubleDouble>>;

fn lift(a: &Array2<f64>) -> Mat {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| DoubleDouble::from(v)).collect())
        .collect()
}

fn lift_vec(a: &[f64]) -> Vec<DoubleDouble> {
    a.iter().map(|&v| DoubleDouble::from(v)).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    (0..inner).fold(DoubleDouble::ZERO, |acc, k| acc + row[k] * b[k][j])
                })
                .collect()
        })
        .collect()
}

/// `w · x + b` for a `rows × cols` weight stored row-major.
fn affine(w: &Array2<f64>, b: &[f64], x: &[DoubleDouble]) -> Vec<DoubleDouble> {
    w.rows()
        .into_iter()
        .zip(b)
        .map(|(row, &bias)| {
            row.iter()
                .zip(x)
                .fold(DoubleDouble::from(bias), |acc, (&w, &x)| acc + DoubleDouble::from(w) * x)
        })
        .collect()
}

fn relu(v: Vec<DoubleDouble>) -> Vec<DoubleDouble> {
    v.into_iter().map(|x| x.max(DoubleDouble::ZERO)).collect()
}

/// Mean squared reconstruction error of `model` on `input`.
pub fn reference_loss(model: &Model, input: &Array2<f64>) -> DoubleDouble {
    let p = &model.params;
    let cfg = &model.config;
    let (l, d) = input.dim();
    let dh = cfg.head_dim();
    let x = lift(input);
    let scale = DoubleDouble::ONE / DoubleDouble::from(dh as f64).sqrt();

    let mut concat = vec![vec![DoubleDouble::ZERO; d]; l];
    for h in 0..cfg.heads {
        let q = matmul(&x, &lift(&p.wq[h]));
        let k = matmul(&x, &lift(&p.wk[h]));
        let v = matmul(&x, &lift(&p.wv[h]));
        for i in 0..l {
            let scores: Vec<DoubleDouble> = (0..l)
                .map(|j| (0..dh).fold(DoubleDouble::ZERO, |acc, c| acc + q[i][c] * k[j][c]) * scale)
                .collect();
            let max = scores.iter().copied().fold(scores[0], DoubleDouble::max);
            let exps: Vec<DoubleDouble> = scores.iter().map(|&s| (s - max).exp()).collect();
            let total = exps.iter().copied().fold(DoubleDouble::ZERO, |a, b| a + b);
            for c in 0..dh {
                let out = (0..l).fold(DoubleDouble::ZERO, |acc, j| acc + exps[j] / total * v[j][c]);
                concat[i][h * dh + c] = out;
            }
        }
    }
    let projected = matmul(&concat, &lift(&p.wo));
    let inv_d = DoubleDouble::ONE / DoubleDouble::from(d as f64);
    let gain = lift_vec(p.ln_gain.as_slice().expect("contiguous"));
    let bias = lift_vec(p.ln_bias.as_slice().expect("contiguous"));
    let mut pooled = vec![DoubleDouble::ZERO; d];
    for i in 0..l {
        let resid: Vec<DoubleDouble> = (0..d).map(|j| x[i][j] + projected[i][j]).collect();
        let mean = resid.iter().copied().fold(DoubleDouble::ZERO, |a, b| a + b) * inv_d;
        let var = resid
            .iter()
            .fold(DoubleDouble::ZERO, |a, &r| a + (r - mean) * (r - mean))
            * inv_d;
        let rstd = DoubleDouble::ONE / (var + DoubleDouble::from(LAYER_NORM_EPS)).sqrt();
        for j in 0..d {
            pooled[j] = pooled[j] + ((resid[j] - mean) * rstd * gain[j] + bias[j]);
        }
    }
    let inv_l = DoubleDouble::ONE / DoubleDouble::from(l as f64);
    let pooled: Vec<DoubleDouble> = pooled.into_iter().map(|v| v * inv_l).collect();

    let slice = |a: &ndarray::Array1<f64>| a.as_slice().expect("contiguous").to_vec();
    let h1 = relu(affine(&p.enc1_w, &slice(&p.enc1_b), &pooled));
    let z = affine(&p.enc2_w, &slice(&p.enc2_b), &h1);
    let h3 = relu(affine(&p.dec1_w, &slice(&p.dec1_b), &z));
    let u = affine(&p.dec2_w, &slice(&p.dec2_b), &h3);

    let mut sse = DoubleDouble::ZERO;
    for i in 0..l {
        for j in 0..d {
            let r = DoubleDouble::from(p.bcast_scale[[i, j]]) * u[j]
                + DoubleDouble::from(p.bcast_bias[[i, j]]);
            let e = r - x[i][j];
            sse = sse + e * e;
        }
    }
    sse / DoubleDouble::from((l * d) as f64)
}
