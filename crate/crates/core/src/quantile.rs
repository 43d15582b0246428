//! Pinball-loss quantile regressors: a linear map or a small ReLU MLP with
//! a shared trunk and one output head per target dimension.
//!
//! Features and targets are z-scored per column with statistics from the
//! proper training split only; `predict` denormalizes, so models always
//! speak raw units (kW) at the interface. The pinball loss is minimized
//! with AdamW (decoupled weight decay, zero by default) over seeded
//! mini-batches, which makes training a pure function of
//! `(training rows, tau, config)`.

use crate::data::{Dataset, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantileError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tau must lie strictly inside (0, 1), got {0}")]
    BadTau(f64),
    #[error("proper training set needs at least 2 rows, got {0}")]
    TrainingSetTooSmall(usize),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    BadConfig(&'static str),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint decode: {0}")]
    Decode(#[from] serde_json::Error),
}

/// Network shape. `Mlp` hidden layers use ReLU; the output layer is
/// linear either way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    Linear,
    Mlp { hidden: Vec<usize> },
}

impl Architecture {
    /// Layer sizes from input to output, e.g. `[p, 64, 64, d]`.
    fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        if let Architecture::Mlp { hidden } = self {
            dims.extend_from_slice(hidden);
        }
        dims.push(output);
        dims
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// AdamW decoupled weight decay.
    pub weight_decay: f64,
    pub architecture: Architecture,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            architecture: Architecture::Mlp {
                hidden: vec![64, 64],
            },
            seed: 0,
            batch_size: 32,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), QuantileError> {
        if self.epochs < 1 {
            return Err(QuantileError::BadConfig("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(QuantileError::BadConfig("learning_rate must be > 0"));
        }
        if self.batch_size < 1 {
            return Err(QuantileError::BadConfig("batch_size must be >= 1"));
        }
        if let Architecture::Mlp { hidden } = &self.architecture {
            if hidden.iter().any(|&h| h == 0) {
                return Err(QuantileError::BadConfig(
                    "hidden layer sizes must be positive",
                ));
            }
        }
        Ok(())
    }
}

/// Trained quantile regressor with its normalization statistics baked in.
/// Immutable after training; prediction is a pure function of
/// `(model, x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileModel {
    pub architecture: Architecture,
    pub tau: f64,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Per-feature z-score statistics from the proper training split.
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
    /// Per-target-column affine denormalization.
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    /// Flat parameter vector: per layer, row-major weight matrix
    /// `(out x in)` followed by the bias vector.
    pub weights: Vec<f64>,
}

impl QuantileModel {
    fn layer_dims(&self) -> Vec<usize> {
        self.architecture
            .layer_dims(self.input_dim, self.output_dim)
    }

    pub fn n_params(&self) -> usize {
        let dims = self.layer_dims();
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Lower/upper quantile prediction in raw units, one value per target
    /// dimension.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, QuantileError> {
        if x.len() != self.input_dim {
            return Err(QuantileError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let xn = self.normalize_input(x);
        let (out, _) = self.forward(&xn);
        Ok(out
            .iter()
            .enumerate()
            .map(|(j, &v)| v * self.target_std[j] + self.target_mean[j])
            .collect())
    }

    pub fn predict_rows(&self, xs: &Matrix) -> Result<Matrix, QuantileError> {
        let mut out = Matrix::zeros(xs.n_rows(), self.output_dim);
        for i in 0..xs.n_rows() {
            let p = self.predict(xs.row(i))?;
            out.row_mut(i).copy_from_slice(&p);
        }
        Ok(out)
    }

    fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| (v - self.feat_mean[j]) / self.feat_std[j])
            .collect()
    }

    /// Forward pass in normalized space. Returns the output and every
    /// post-activation (input first) for backprop.
    fn forward(&self, xn: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let dims = self.layer_dims();
        let n_layers = dims.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        activations.push(xn.to_vec());
        let mut offset = 0;
        let mut cur = xn.to_vec();
        for l in 0..n_layers {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let w = &self.weights[offset..offset + n_out * n_in];
            let b = &self.weights[offset + n_out * n_in..offset + n_out * n_in + n_out];
            offset += n_out * n_in + n_out;
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for (wv, xv) in row.iter().zip(&cur) {
                    acc += wv * xv;
                }
                next[o] = acc;
            }
            if l + 1 < n_layers {
                for v in next.iter_mut() {
                    *v = v.max(0.0); // ReLU
                }
            }
            activations.push(next.clone());
            cur = next;
        }
        (cur, activations)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<(), QuantileError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self, QuantileError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Mean-over-dimensions pinball (check) loss: `max(tau*r, (tau-1)*r)` with
/// residual `r = target - pred`. Zero iff `pred == target`.
pub fn pinball_loss(pred: &[f64], target: &[f64], tau: f64) -> Result<f64, QuantileError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QuantileError::BadTau(tau));
    }
    if pred.len() != target.len() {
        return Err(QuantileError::DimensionMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let mut acc = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        let r = t - p;
        acc += (tau * r).max((tau - 1.0) * r);
    }
    Ok(acc / pred.len() as f64)
}

/// Pinball slope wrt the residual; exact zeros take the flat subgradient
/// so that perfectly fit points contribute nothing.
fn pinball_slope(residual: f64, tau: f64) -> f64 {
    if residual > 0.0 {
        tau
    } else if residual < 0.0 {
        tau - 1.0
    } else {
        0.0
    }
}

/// Mean pinball loss of `model` over a batch, in raw target units.
pub fn batch_loss(
    model: &QuantileModel,
    xs: &Matrix,
    ys: &Matrix,
    tau: f64,
) -> Result<f64, QuantileError> {
    if xs.n_rows() == 0 {
        return Err(QuantileError::TrainingSetTooSmall(0));
    }
    let mut acc = 0.0;
    for i in 0..xs.n_rows() {
        acc += pinball_loss(&model.predict(xs.row(i))?, ys.row(i), tau)?;
    }
    Ok(acc / xs.n_rows() as f64)
}

/// Gradient of [`batch_loss`] wrt the flat weight vector (backprop through
/// the denormalization, the linear/ReLU stack, and the input z-score).
pub fn gradient(
    model: &QuantileModel,
    xs: &Matrix,
    ys: &Matrix,
    tau: f64,
) -> Result<Vec<f64>, QuantileError> {
    if xs.n_rows() == 0 {
        return Err(QuantileError::TrainingSetTooSmall(0));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QuantileError::BadTau(tau));
    }
    if ys.n_cols() != model.output_dim || ys.n_rows() != xs.n_rows() {
        return Err(QuantileError::DimensionMismatch {
            expected: model.output_dim,
            got: ys.n_cols(),
        });
    }
    let dims = model.layer_dims();
    let n_layers = dims.len() - 1;
    let mut grad = vec![0.0; model.weights.len()];
    let scale = 1.0 / (xs.n_rows() as f64 * model.output_dim as f64);

    // Per-layer weight offsets into the flat vector.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in 0..n_layers {
        offsets.push(off);
        off += dims[l + 1] * dims[l] + dims[l + 1];
    }

    for i in 0..xs.n_rows() {
        if xs.row(i).len() != model.input_dim {
            return Err(QuantileError::DimensionMismatch {
                expected: model.input_dim,
                got: xs.row(i).len(),
            });
        }
        let xn = model.normalize_input(xs.row(i));
        let (out, acts) = model.forward(&xn);
        let y = ys.row(i);

        // d(loss)/d(normalized output)
        let mut delta: Vec<f64> = (0..model.output_dim)
            .map(|j| {
                let pred = out[j] * model.target_std[j] + model.target_mean[j];
                let r = y[j] - pred;
                -pinball_slope(r, tau) * model.target_std[j] * scale
            })
            .collect();

        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let a_in = &acts[l];
            let w_off = offsets[l];
            let g = &mut grad[w_off..w_off + n_out * n_in + n_out];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut g[o * n_in..(o + 1) * n_in];
                    for (gv, av) in row.iter_mut().zip(a_in) {
                        *gv += d * av;
                    }
                }
                g[n_out * n_in + o] += d;
            }
            if l > 0 {
                let w = &model.weights[w_off..w_off + n_out * n_in];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &w[o * n_in..(o + 1) * n_in];
                        for (pv, wv) in prev.iter_mut().zip(row) {
                            *pv += d * wv;
                        }
                    }
                }
                // ReLU gate: closed at or below zero pre-activation.
                for (pv, &av) in prev.iter_mut().zip(&acts[l]) {
                    if av <= 0.0 {
                        *pv = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok(grad)
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (m.n_rows(), m.n_cols());
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (j, &v) in m.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= n as f64;
    }
    let mut std = vec![0.0; p];
    for i in 0..n {
        for (j, &v) in m.row(i).iter().enumerate() {
            std[j] += (v - mean[j]).powi(2);
        }
    }
    for v in std.iter_mut() {
        *v = (*v / n as f64).sqrt();
        if *v < 1e-12 {
            *v = 1.0; // constant column: normalized value 0, exact inverse
        }
    }
    (mean, std)
}

/// Train a quantile regressor at level `tau` on the proper training split
/// of `dataset`. Deterministic given `(dataset, tau, cfg.seed)`.
///
/// Only the training view of the dataset is ever touched; calibration and
/// test rows cannot leak into the fit or the normalization statistics.
pub fn train_quantile_model(
    dataset: &Dataset,
    tau: f64,
    cfg: &TrainConfig,
) -> Result<QuantileModel, QuantileError> {
    let (xs, ys) = dataset.train_view();
    train_on_rows(&xs, &ys, tau, cfg)
}

/// Training core on explicit rows (the I1 view).
pub fn train_on_rows(
    xs: &Matrix,
    ys: &Matrix,
    tau: f64,
    cfg: &TrainConfig,
) -> Result<QuantileModel, QuantileError> {
    cfg.validate()?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QuantileError::BadTau(tau));
    }
    let n = xs.n_rows();
    if n < 2 {
        return Err(QuantileError::TrainingSetTooSmall(n));
    }
    let (feat_mean, feat_std) = column_stats(xs);
    let (target_mean, target_std) = column_stats(ys);

    let mut model = QuantileModel {
        architecture: cfg.architecture.clone(),
        tau,
        input_dim: xs.n_cols(),
        output_dim: ys.n_cols(),
        feat_mean,
        feat_std,
        target_mean,
        target_std,
        weights: Vec::new(),
    };
    let dims = model.layer_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = rand_distr::StandardNormal;
    let mut weights = Vec::with_capacity(model.n_params());
    let n_layers = dims.len() - 1;
    for l in 0..n_layers {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let sd = if n_layers == 1 {
            0.0 // linear model starts at the normalized mean
        } else if l + 1 == n_layers {
            0.01
        } else {
            (2.0 / n_in as f64).sqrt() // He init for the ReLU trunk
        };
        for _ in 0..n_out * n_in {
            let g: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
            weights.push(g * sd);
        }
        weights.extend(std::iter::repeat(0.0).take(n_out));
    }
    model.weights = weights;

    let mut m1 = vec![0.0; model.weights.len()];
    let mut m2 = vec![0.0; model.weights.len()];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut step = 0usize;
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        // Fisher-Yates with the epoch-shared stream keeps batch order a
        // pure function of the seed.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch) {
            let bx = xs.select_rows(chunk);
            let by = ys.select_rows(chunk);
            let g = gradient(&model, &bx, &by, tau)?;
            step += 1;
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            for k in 0..model.weights.len() {
                m1[k] = beta1 * m1[k] + (1.0 - beta1) * g[k];
                m2[k] = beta2 * m2[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m1[k] / bc1;
                let vhat = m2[k] / bc2;
                model.weights[k] -= cfg.learning_rate
                    * (mhat / (vhat.sqrt() + eps) + cfg.weight_decay * model.weights[k]);
            }
        }
        let loss = batch_loss(&model, xs, ys, tau)?;
        if !loss.is_finite() {
            return Err(QuantileError::NonFiniteLoss { epoch });
        }
    }
    Ok(model)
}

/// Fraction of (sample, dimension) pairs where the lower-quantile model
/// predicts above the upper-quantile model. Reported as a diagnostic; the
/// conformal layer operates on the raw outputs either way.
pub fn crossing_rate(
    lower: &QuantileModel,
    upper: &QuantileModel,
    xs: &Matrix,
) -> Result<f64, QuantileError> {
    let lo = lower.predict_rows(xs)?;
    let hi = upper.predict_rows(xs)?;
    let mut crossed = 0usize;
    let total = lo.n_rows() * lo.n_cols();
    for i in 0..lo.n_rows() {
        for j in 0..lo.n_cols() {
            if lo.get(i, j) > hi.get(i, j) {
                crossed += 1;
            }
        }
    }
    Ok(crossed as f64 / total.max(1) as f64)
}
