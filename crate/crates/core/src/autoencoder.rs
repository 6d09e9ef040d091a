//! Single-hidden-layer sparse autoencoder.
//!
//! Encoder `h = sigmoid(W x + b)`, decoder `x' = satlin(W' h + b')`. The training loss
//! over an M-row batch is
//!
//! ```text
//! (1/M) sum ||x - x'||^2 + lambda/2 (||W||^2 + ||W'||^2) + beta sum_i KL(rho || rho_hat_i)
//! ```
//!
//! with `rho_hat_i` the mean activation of hidden unit `i` over the batch. Training is
//! full-batch gradient descent with a backtracking step size.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DeaError, Result};

/// Clamp applied to mean activations before taking logarithms.
pub const RHO_HAT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    /// P x Q
    #[serde(with = "crate::serde_matrix")]
    pub enc_weights: Array2<f64>,
    pub enc_bias: Array1<f64>,
    /// Q x P
    #[serde(with = "crate::serde_matrix")]
    pub dec_weights: Array2<f64>,
    pub dec_bias: Array1<f64>,
}

impl AutoencoderParams {
    pub fn zeros(q: usize, p: usize) -> Self {
        AutoencoderParams {
            enc_weights: Array2::zeros((p, q)),
            enc_bias: Array1::zeros(p),
            dec_weights: Array2::zeros((q, p)),
            dec_bias: Array1::zeros(q),
        }
    }

    /// Glorot-style uniform weights in `(-r, r)`, `r = sqrt(6 / (Q + P))`; zero biases.
    pub fn init(q: usize, p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = (6.0 / (q + p) as f64).sqrt();
        let mut draw = |shape: (usize, usize)| {
            Array2::from_shape_simple_fn(shape, || rng.random_range(-r..r))
        };
        let enc_weights = draw((p, q));
        let dec_weights = draw((q, p));
        AutoencoderParams {
            enc_weights,
            enc_bias: Array1::zeros(p),
            dec_weights,
            dec_bias: Array1::zeros(q),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.enc_weights.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.enc_weights.nrows()
    }

    fn check(&self) -> Result<()> {
        let (p, q) = self.enc_weights.dim();
        if self.enc_bias.len() != p || self.dec_weights.dim() != (q, p) || self.dec_bias.len() != q
        {
            return Err(DeaError::Dimension(format!(
                "inconsistent autoencoder shapes: W {:?}, b {}, W' {:?}, b' {}",
                self.enc_weights.dim(),
                self.enc_bias.len(),
                self.dec_weights.dim(),
                self.dec_bias.len()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Flattened views of W, b, W', b' in that order.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [
            self.enc_weights.as_slice().expect("standard layout"),
            self.enc_bias.as_slice().expect("standard layout"),
            self.dec_weights.as_slice().expect("standard layout"),
            self.dec_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.enc_weights.as_slice_mut().expect("standard layout"),
            self.enc_bias.as_slice_mut().expect("standard layout"),
            self.dec_weights.as_slice_mut().expect("standard layout"),
            self.dec_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    /// `self - step * grad`
    fn stepped(&self, grad: &AutoencoderParams, step: f64) -> AutoencoderParams {
        AutoencoderParams {
            enc_weights: &self.enc_weights - &(&grad.enc_weights * step),
            enc_bias: &self.enc_bias - &(&grad.enc_bias * step),
            dec_weights: &self.dec_weights - &(&grad.dec_weights * step),
            dec_bias: &self.dec_bias - &(&grad.dec_bias * step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 weight coefficient.
    pub lambda: f64,
    /// Sparsity coefficient.
    pub beta: f64,
    /// Target mean activation.
    pub rho: f64,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Relative loss improvement over a 100-epoch window below which training stops.
    pub stop_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.001,
            beta: 1.6,
            rho: 0.05,
            max_epochs: 20_000,
            learning_rate: 0.05,
            stop_tol: 1e-7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(DeaError::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.lambda >= 0.0) || !(self.beta >= 0.0) {
            return Err(DeaError::invalid("lambda and beta must be nonnegative"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(DeaError::invalid("learning rate must be positive"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(DeaError::invalid("stop tolerance must be nonnegative"));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn satlin(z: f64) -> f64 {
    z.clamp(0.0, 1.0)
}

/// `KL(rho || rho_hat)` for Bernoulli means, with `rho_hat` clamped away from 0 and 1.
pub fn kl_bernoulli(rho: f64, rho_hat: f64) -> f64 {
    let r = rho_hat.clamp(RHO_HAT_EPS, 1.0 - RHO_HAT_EPS);
    rho * (rho / r).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - r)).ln()
}

pub fn encode(params: &AutoencoderParams, x: ArrayView1<f64>) -> Array1<f64> {
    let z = params.enc_weights.dot(&x) + &params.enc_bias;
    z.mapv(sigmoid)
}

pub fn decode(params: &AutoencoderParams, h: ArrayView1<f64>) -> Array1<f64> {
    let z = params.dec_weights.dot(&h) + &params.dec_bias;
    z.mapv(satlin)
}

/// Encodes every row of `batch`: M x Q in, M x P out.
pub fn encode_rows(params: &AutoencoderParams, batch: ArrayView2<f64>) -> Array2<f64> {
    let mut z = batch.dot(&params.enc_weights.t());
    z += &params.enc_bias;
    z.mapv_inplace(sigmoid);
    z
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    /// Unscaled `1/2 (||W||^2 + ||W'||^2)`.
    pub l2: f64,
    /// Unscaled `sum_i KL(rho || rho_hat_i)`.
    pub sparsity: f64,
}

struct Forward {
    hidden: Array2<f64>,
    dec_pre: Array2<f64>,
    output: Array2<f64>,
    rho_hat: Array1<f64>,
    loss: LossBreakdown,
}

fn forward(params: &AutoencoderParams, batch: ArrayView2<f64>, cfg: &TrainConfig) -> Forward {
    let m = batch.nrows() as f64;
    let hidden = encode_rows(params, batch);
    let mut dec_pre = hidden.dot(&params.dec_weights.t());
    dec_pre += &params.dec_bias;
    let output = dec_pre.mapv(satlin);

    let mse = output
        .iter()
        .zip(batch.iter())
        .map(|(o, x)| (x - o) * (x - o))
        .sum::<f64>()
        / m;
    let l2 = 0.5
        * (params.enc_weights.iter().map(|w| w * w).sum::<f64>()
            + params.dec_weights.iter().map(|w| w * w).sum::<f64>());
    let rho_hat = hidden.sum_axis(Axis(0)) / m;
    let sparsity = rho_hat.iter().map(|&r| kl_bernoulli(cfg.rho, r)).sum::<f64>();
    let total = mse + cfg.lambda * l2 + cfg.beta * sparsity;
    Forward {
        hidden,
        dec_pre,
        output,
        rho_hat,
        loss: LossBreakdown {
            total,
            mse,
            l2,
            sparsity,
        },
    }
}

fn check_batch(params: &AutoencoderParams, batch: ArrayView2<f64>) -> Result<()> {
    params.check()?;
    if batch.ncols() != params.input_dim() {
        return Err(DeaError::Dimension(format!(
            "batch has {} columns, autoencoder expects {}",
            batch.ncols(),
            params.input_dim()
        )));
    }
    if batch.nrows() == 0 {
        return Err(DeaError::invalid("empty batch"));
    }
    Ok(())
}

pub fn loss(
    params: &AutoencoderParams,
    batch: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    check_batch(params, batch)?;
    Ok(forward(params, batch, cfg).loss)
}

fn backward(
    params: &AutoencoderParams,
    batch: ArrayView2<f64>,
    cfg: &TrainConfig,
    fwd: &Forward,
) -> AutoencoderParams {
    let m = batch.nrows() as f64;
    // d loss / d decoder pre-activation; satlin passes gradient only strictly inside (0, 1)
    let mut d_dec = &fwd.output - &batch;
    d_dec.zip_mut_with(&fwd.dec_pre, |g, &z| {
        *g = if z > 0.0 && z < 1.0 { *g * 2.0 / m } else { 0.0 };
    });

    let dec_weights = d_dec.t().dot(&fwd.hidden) + &(&params.dec_weights * cfg.lambda);
    let dec_bias = d_dec.sum_axis(Axis(0));

    let kl_grad: Array1<f64> = fwd.rho_hat.mapv(|r| {
        if r <= RHO_HAT_EPS || r >= 1.0 - RHO_HAT_EPS {
            0.0
        } else {
            cfg.beta * (-cfg.rho / r + (1.0 - cfg.rho) / (1.0 - r)) / m
        }
    });
    let mut d_hidden = d_dec.dot(&params.dec_weights);
    d_hidden += &kl_grad;
    d_hidden.zip_mut_with(&fwd.hidden, |g, &h| *g *= h * (1.0 - h));

    let enc_weights = d_hidden.t().dot(&batch) + &(&params.enc_weights * cfg.lambda);
    let enc_bias = d_hidden.sum_axis(Axis(0));
    AutoencoderParams {
        enc_weights: enc_weights.as_standard_layout().into_owned(),
        enc_bias,
        dec_weights: dec_weights.as_standard_layout().into_owned(),
        dec_bias,
    }
}

/// Analytic full-batch gradient of the training loss.
pub fn gradient(
    params: &AutoencoderParams,
    batch: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<AutoencoderParams> {
    check_batch(params, batch)?;
    let fwd = forward(params, batch, cfg);
    Ok(backward(params, batch, cfg, &fwd))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AutoencoderParams,
    /// Loss of the accepted parameters after every epoch; entry 0 is the initial loss.
    pub loss_history: Vec<f64>,
    pub epochs: usize,
    pub final_loss: LossBreakdown,
}

const WINDOW: usize = 100;
const RESTORE_AFTER: usize = 50;

/// Trains a `Q -> p -> Q` autoencoder on the rows of `batch`.
///
/// A step that raises the loss is rejected and the step size halved; after 50
/// consecutive accepted steps the configured step size is restored. The recorded loss
/// is therefore non-increasing.
pub fn train(batch: ArrayView2<f64>, p: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let q = batch.ncols();
    if p == 0 || p >= q {
        return Err(DeaError::invalid(format!(
            "hidden size {p} must satisfy 0 < P < Q = {q}"
        )));
    }
    if let Some(((r, c), _)) = batch.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(DeaError::NonFinite { row: r + 1, col: c + 1 });
    }

    let mut params = AutoencoderParams::init(q, p, cfg.seed);
    check_batch(&params, batch)?;
    let mut fwd = forward(&params, batch, cfg);
    if !fwd.loss.total.is_finite() {
        return Err(DeaError::Divergence { epoch: 0 });
    }
    let mut grad = backward(&params, batch, cfg, &fwd);
    let mut history = vec![fwd.loss.total];
    let mut lr = cfg.learning_rate;
    let mut streak = 0usize;
    let mut epochs = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        let candidate = params.stepped(&grad, lr);
        let cand_fwd = forward(&candidate, batch, cfg);
        let cand_loss = cand_fwd.loss.total;
        if !cand_loss.is_finite() {
            return Err(DeaError::Divergence { epoch });
        }
        if cand_loss <= fwd.loss.total {
            params = candidate;
            fwd = cand_fwd;
            grad = backward(&params, batch, cfg, &fwd);
            streak += 1;
            if streak >= RESTORE_AFTER && lr < cfg.learning_rate {
                lr = cfg.learning_rate;
                streak = 0;
            }
        } else {
            lr *= 0.5;
            streak = 0;
        }
        history.push(fwd.loss.total);

        if lr < 1e-30 {
            break;
        }
        if epoch >= WINDOW {
            let old = history[epoch - WINDOW];
            let now = fwd.loss.total;
            if (old - now) / old.abs().max(f64::MIN_POSITIVE) < cfg.stop_tol {
                break;
            }
        }
    }
    if !grad.is_finite() {
        return Err(DeaError::Divergence { epoch: epochs });
    }

    Ok(TrainOutcome {
        params,
        loss_history: history,
        epochs,
        final_loss: fwd.loss,
    })
}

/// Encodes every row of `reduced / scale`: the M x P component matrix.
pub fn project(params: &AutoencoderParams, reduced: &Array2<f64>, scale: f64) -> Result<Array2<f64>> {
    params.check()?;
    if reduced.ncols() != params.input_dim() {
        return Err(DeaError::Dimension(format!(
            "reduced matrix has {} columns, autoencoder expects {}",
            reduced.ncols(),
            params.input_dim()
        )));
    }
    if !(scale > 0.0) {
        return Err(DeaError::invalid("input scale must be positive"));
    }
    let scaled = reduced / scale;
    Ok(encode_rows(params, scaled.view()))
}
