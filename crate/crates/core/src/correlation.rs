//! Rolling Spearman correlation of the feature columns, embedded into the
//! attention model's square input.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::features::{FeatureMatrix, FEATURE_COUNT};

pub const DEFAULT_WINDOW: usize = 32;
pub const DEFAULT_STRIDE: usize = 1;
/// Side of the padded matrix fed to the attention model.
pub const MODEL_DIM: usize = 32;
/// Diagonal value of the padding block. 1 keeps the padded matrix a valid
/// correlation matrix; 0 would zero-pad.
pub const PADDING_DIAGONAL: f64 = 1.0;

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation, 0 when either side has zero variance.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Spearman's rho as the Pearson correlation of average ranks. Without ties
/// this equals `1 - 6 Σd² / (n(n² - 1))`; with ties it stays well defined.
/// A constant input yields 0.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "spearman_rho: length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::TooShort {
            what: "spearman_rho",
            required: 2,
            actual: x.len(),
        });
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrMatrix {
    /// Exclusive end of the window: it covers bars `window_end - n .. window_end`,
    /// so the last bar in the window has index `window_end - 1`.
    pub window_end: usize,
    pub raw: [[f64; FEATURE_COUNT]; FEATURE_COUNT],
    #[serde(skip)]
    pub padded: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrSequence {
    pub ticker: String,
    pub window_length: usize,
    pub stride: usize,
    pub matrices: Vec<CorrMatrix>,
}

impl CorrSequence {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn find(&self, window_end: usize) -> Option<&CorrMatrix> {
        self.matrices
            .binary_search_by_key(&window_end, |m| m.window_end)
            .ok()
            .map(|i| &self.matrices[i])
    }
}

/// Places `raw` in the top-left block of a `MODEL_DIM` square and fills the
/// remaining diagonal with [`PADDING_DIAGONAL`]. The trimming case
/// (more features than `MODEL_DIM`) cannot arise with five features.
pub fn pad_to_model_dim(raw: &[[f64; FEATURE_COUNT]; FEATURE_COUNT]) -> Array2<f64> {
    let mut padded = Array2::zeros((MODEL_DIM, MODEL_DIM));
    for k in FEATURE_COUNT..MODEL_DIM {
        padded[[k, k]] = PADDING_DIAGONAL;
    }
    for i in 0..FEATURE_COUNT {
        for j in 0..FEATURE_COUNT {
            padded[[i, j]] = raw[i][j];
        }
    }
    padded
}

/// Spearman matrix of the feature columns over `rows`. The diagonal is 1 even
/// for a constant column, whose off-diagonal entries are 0.
fn window_matrix(rows: &[[f64; FEATURE_COUNT]]) -> [[f64; FEATURE_COUNT]; FEATURE_COUNT] {
    let ranks: Vec<Vec<f64>> = (0..FEATURE_COUNT)
        .map(|j| average_ranks(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let mut raw = [[0.0; FEATURE_COUNT]; FEATURE_COUNT];
    for i in 0..FEATURE_COUNT {
        raw[i][i] = 1.0;
        for j in (i + 1)..FEATURE_COUNT {
            let r = pearson(&ranks[i], &ranks[j]);
            raw[i][j] = r;
            raw[j][i] = r;
        }
    }
    raw
}

pub fn rolling_correlation_matrices(
    matrix: &FeatureMatrix,
    window: usize,
    stride: usize,
) -> Result<CorrSequence> {
    rolling_correlation_matrices_with(matrix, window, stride, Execution::default())
}

/// One matrix per window end `window, window + stride, ...`, in order.
pub fn rolling_correlation_matrices_with(
    matrix: &FeatureMatrix,
    window: usize,
    stride: usize,
    exec: Execution,
) -> Result<CorrSequence> {
    if !matrix.scaled {
        return Err(Error::Config("correlation input must be MinMax scaled".into()));
    }
    if window < 2 || stride == 0 {
        return Err(Error::Config(format!(
            "window must be >= 2 and stride >= 1 (got {window}, {stride})"
        )));
    }
    if matrix.len() < window {
        return Err(Error::TooShort {
            what: "rolling correlation",
            required: window,
            actual: matrix.len(),
        });
    }
    let count = (matrix.len() - window) / stride + 1;
    let matrices = exec::map_range(exec, count, |k| {
        let end = window + k * stride;
        let raw = window_matrix(&matrix.rows[end - window..end]);
        CorrMatrix {
            window_end: end,
            padded: pad_to_model_dim(&raw),
            raw,
        }
    });
    Ok(CorrSequence {
        ticker: matrix.ticker.clone(),
        window_length: window,
        stride,
        matrices,
    })
}

pub fn padded_to_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
