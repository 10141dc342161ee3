use ndarray::{Array1, Array2};

/// Every trainable tensor of the model. Gradients and optimizer state use
/// the same struct.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub wq: Vec<Array2<f64>>,
    pub wk: Vec<Array2<f64>>,
    pub wv: Vec<Array2<f64>>,
    pub wo: Array2<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    pub enc1_w: Array2<f64>,
    pub enc1_b: Array1<f64>,
    pub enc2_w: Array2<f64>,
    pub enc2_b: Array1<f64>,
    pub dec1_w: Array2<f64>,
    pub dec1_b: Array1<f64>,
    pub dec2_w: Array2<f64>,
    pub dec2_b: Array1<f64>,
    pub bcast_scale: Array2<f64>,
    pub bcast_bias: Array2<f64>,
}

macro_rules! for_each_tensor {
    ($self:expr, $head:ident, $one:ident) => {{
        let mut out = Vec::new();
        for (h, w) in $self.wq.$head().enumerate() {
            out.push((format!("wq.{h}"), w.$one()));
        }
        for (h, w) in $self.wk.$head().enumerate() {
            out.push((format!("wk.{h}"), w.$one()));
        }
        for (h, w) in $self.wv.$head().enumerate() {
            out.push((format!("wv.{h}"), w.$one()));
        }
        out.push(("wo".to_string(), $self.wo.$one()));
        out.push(("ln_gain".to_string(), $self.ln_gain.$one()));
        out.push(("ln_bias".to_string(), $self.ln_bias.$one()));
        out.push(("enc1_w".to_string(), $self.enc1_w.$one()));
        out.push(("enc1_b".to_string(), $self.enc1_b.$one()));
        out.push(("enc2_w".to_string(), $self.enc2_w.$one()));
        out.push(("enc2_b".to_string(), $self.enc2_b.$one()));
        out.push(("dec1_w".to_string(), $self.dec1_w.$one()));
        out.push(("dec1_b".to_string(), $self.dec1_b.$one()));
        out.push(("dec2_w".to_string(), $self.dec2_w.$one()));
        out.push(("dec2_b".to_string(), $self.dec2_b.$one()));
        out.push(("bcast_scale".to_string(), $self.bcast_scale.$one()));
        out.push(("bcast_bias".to_string(), $self.bcast_bias.$one()));
        out
    }};
}

trait Flat {
    fn flat(&self) -> &[f64];
    fn flat_mut(&mut self) -> &mut [f64];
    fn dims(&self) -> Vec<usize>;
}

impl<D: ndarray::Dimension> Flat for ndarray::Array<f64, D> {
    fn flat(&self) -> &[f64] {
        self.as_slice().expect("parameters are stored contiguously")
    }
    fn flat_mut(&mut self) -> &mut [f64] {
        self.as_slice_mut().expect("parameters are stored contiguously")
    }
    fn dims(&self) -> Vec<usize> {
        self.shape().to_vec()
    }
}

impl Params {
    /// Tensors in their fixed canonical order (also the checkpoint order).
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        for_each_tensor!(self, iter, flat)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        for_each_tensor!(self, iter_mut, flat_mut)
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        for_each_tensor!(self, iter, dims)
    }

    pub fn set(&mut self, tensor: usize, index: usize, value: f64) {
        self.tensors_mut()[tensor].1[index] = value;
    }

    pub fn zeros_like(other: &Params) -> Params {
        let mut p = other.clone();
        for (_, t) in p.tensors_mut() {
            t.fill(0.0);
        }
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += k * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, k: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }
}
