//! Fourier / phase network: a bag regressor whose first layer learns the frequencies.
//!
//! Per bag `X` (`N × p`): `f = XW`, pair `(cos f, sin f)`, mean-pool over the
//! `N` points, in phase mode normalize each pair to unit length, optionally batch
//! normalize, then a scalar linear output. Features use the interleaved layout
//! `(cos₁, sin₁, …, cos_m, sin_m)`.
//!
//! Gradients are analytic. A pair whose norm is below `norm_floor` is divided by
//! the floor and passes no gradient back through the normalization.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{check_floor, Bag, DEFAULT_NORM_FLOOR};
use crate::optim::Adam;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::spectral::{median_heuristic, sample_gaussian_frequencies, DEFAULT_MEDIAN_POINTS};
use crate::trig::sin_cos;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetMode {
    Fourier,
    Phase,
}

impl std::str::FromStr for NetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(NetMode::Fourier),
            "phase" => Ok(NetMode::Phase),
            other => Err(Error::invalid(format!("unknown network mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormState {
    fn new(width: usize) -> Self {
        BatchNormState {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// Network parameters; also the checkpoint layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct FreqNetParams {
    pub p: usize,
    pub m: usize,
    pub mode: NetMode,
    /// `p × m`, row-major; column `j` is the frequency `ω_j`.
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub out_weights: Vec<f64>,
    pub out_bias: f64,
    pub bn_state: Option<BatchNormState>,
    pub norm_floor: f64,
}

#[derive(Deserialize)]
struct RawParams {
    p: usize,
    m: usize,
    mode: NetMode,
    #[serde(rename = "W")]
    w: Vec<f64>,
    out_weights: Vec<f64>,
    out_bias: f64,
    bn_state: Option<BatchNormState>,
    #[serde(default = "default_floor")]
    norm_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_NORM_FLOOR
}

impl TryFrom<RawParams> for FreqNetParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        let params = FreqNetParams {
            p: r.p,
            m: r.m,
            mode: r.mode,
            w: r.w,
            out_weights: r.out_weights,
            out_bias: r.out_bias,
            bn_state: r.bn_state,
            norm_floor: r.norm_floor,
        };
        params.validate()?;
        Ok(params)
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl FreqNetParams {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 {
            return Err(Error::invalid("p and m must be at least 1"));
        }
        let pm = self.p.checked_mul(self.m).ok_or_else(|| Error::invalid("p·m overflows"))?;
        if self.w.len() != pm || self.out_weights.len() != 2 * self.m {
            return Err(Error::invalid("parameter shapes do not match p and m"));
        }
        if !all_finite(&self.w) || !all_finite(&self.out_weights) || !self.out_bias.is_finite() {
            return Err(Error::invalid("parameters must be finite"));
        }
        if let Some(bn) = &self.bn_state {
            let w = 2 * self.m;
            if [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var].iter().any(|v| v.len() != w) {
                return Err(Error::invalid("batch-norm state has the wrong width"));
            }
            if [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var].iter().any(|v| !all_finite(v)) {
                return Err(Error::invalid("batch-norm state must be finite"));
            }
            if bn.running_var.iter().any(|v| *v < 0.0) {
                return Err(Error::invalid("running variance must be nonnegative"));
            }
        }
        check_floor(self.norm_floor)
    }

    pub fn omega(&self, j: usize) -> Vec<f64> {
        (0..self.p).map(|k| self.w[k * self.m + j]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn width(&self) -> usize {
        2 * self.m
    }

    fn flatten(&self) -> Vec<f64> {
        let mut v = self.w.clone();
        v.extend_from_slice(&self.out_weights);
        v.push(self.out_bias);
        if let Some(bn) = &self.bn_state {
            v.extend_from_slice(&bn.gamma);
            v.extend_from_slice(&bn.beta);
        }
        v
    }

    fn unflatten(&mut self, v: &[f64]) {
        let (pm, w2) = (self.w.len(), self.width());
        self.w.copy_from_slice(&v[..pm]);
        self.out_weights.copy_from_slice(&v[pm..pm + w2]);
        self.out_bias = v[pm + w2];
        if let Some(bn) = &mut self.bn_state {
            let o = pm + w2 + 1;
            bn.gamma.copy_from_slice(&v[o..o + w2]);
            bn.beta.copy_from_slice(&v[o + w2..o + 2 * w2]);
        }
    }
}

/// Reads a JSON checkpoint, validating shapes and values.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<FreqNetParams> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Gradients in the same layout as [`FreqNetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<f64>,
    pub out_weights: Vec<f64>,
    pub out_bias: f64,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
}

impl Gradients {
    fn flatten(&self) -> Vec<f64> {
        let mut v = self.w.clone();
        v.extend_from_slice(&self.out_weights);
        v.push(self.out_bias);
        v.extend_from_slice(&self.bn_gamma);
        v.extend_from_slice(&self.bn_beta);
        v
    }
}

/// Per-bag quantities kept for the backward pass.
struct BagPass {
    /// Mean-pooled `(cos, sin)` per frequency, interleaved.
    pooled: Vec<f64>,
    /// Pair norms before clamping.
    norms: Vec<f64>,
    /// Pre-batch-norm features.
    h: Vec<f64>,
}

fn bag_pass(params: &FreqNetParams, bag: &Bag) -> BagPass {
    let (p, m) = (params.p, params.m);
    let n = bag.len() as f64;
    let mut pooled = vec![0.0; 2 * m];
    for i in 0..bag.len() {
        let x = bag.point(i);
        for j in 0..m {
            let f: f64 = (0..p).map(|k| x[k] * params.w[k * m + j]).sum();
            let (s, c) = sin_cos(f);
            pooled[2 * j] += c;
            pooled[2 * j + 1] += s;
        }
    }
    pooled.iter_mut().for_each(|v| *v /= n);
    let norms: Vec<f64> = (0..m).map(|j| pooled[2 * j].hypot(pooled[2 * j + 1])).collect();
    let h = match params.mode {
        NetMode::Fourier => pooled.clone(),
        NetMode::Phase => normalize_pairs(&pooled, params.norm_floor),
    };
    BagPass { pooled, norms, h }
}

/// Divides each `(cos, sin)` pair by `max(norm, floor)`.
fn normalize_pairs(pooled: &[f64], floor: f64) -> Vec<f64> {
    let mut out = pooled.to_vec();
    for pair in out.chunks_mut(2) {
        let r = pair[0].hypot(pair[1]).max(floor);
        pair[0] /= r;
        pair[1] /= r;
    }
    out
}

fn check_bags(params: &FreqNetParams, bags: &[&Bag]) -> Result<()> {
    if bags.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    for b in bags {
        b.check_dim(params.p)?;
        if b.is_empty() {
            return Err(Error::invalid("empty bag"));
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Predictions in inference mode (batch norm uses running statistics).
pub fn forward(params: &FreqNetParams, bags: &[&Bag]) -> Result<Vec<f64>> {
    check_bags(params, bags)?;
    Ok(bags
        .par_iter()
        .map(|bag| {
            let mut h = bag_pass(params, bag).h;
            if let Some(bn) = &params.bn_state {
                for k in 0..h.len() {
                    h[k] = bn.gamma[k] * (h[k] - bn.running_mean[k]) / (bn.running_var[k] + BN_EPS).sqrt() + bn.beta[k];
                }
            }
            dot(&params.out_weights, &h) + params.out_bias
        })
        .collect())
}

/// Training-mode loss, gradients, and the batch statistics used by batch norm.
pub struct LossEval {
    pub loss: f64,
    pub mse: f64,
    pub grads: Gradients,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Mean squared error plus `l2_w‖W‖² + l2_out‖a‖²`, with batch norm (if present)
/// in training mode, and its exact gradient.
pub fn loss_and_grad(params: &FreqNetParams, bags: &[&Bag], labels: &[f64], l2_w: f64, l2_out: f64) -> Result<LossEval> {
    check_bags(params, bags)?;
    if labels.len() != bags.len() {
        return Err(Error::DimensionMismatch { expected: bags.len(), got: labels.len() });
    }
    let (p, m, width) = (params.p, params.m, params.width());
    let nb = bags.len();
    let bf = nb as f64;
    let passes: Vec<BagPass> = bags.par_iter().map(|b| bag_pass(params, b)).collect();

    // batch norm, training mode
    let (z, hhat, mean, var) = match &params.bn_state {
        Some(bn) => {
            let mut mean = vec![0.0; width];
            let mut var = vec![0.0; width];
            for ps in &passes {
                for k in 0..width {
                    mean[k] += ps.h[k] / bf;
                }
            }
            for ps in &passes {
                for k in 0..width {
                    var[k] += (ps.h[k] - mean[k]).powi(2) / bf;
                }
            }
            let hhat: Vec<Vec<f64>> = passes
                .iter()
                .map(|ps| (0..width).map(|k| (ps.h[k] - mean[k]) / (var[k] + BN_EPS).sqrt()).collect())
                .collect();
            let z = hhat
                .iter()
                .map(|hh| (0..width).map(|k| bn.gamma[k] * hh[k] + bn.beta[k]).collect())
                .collect();
            (z, hhat, mean, var)
        }
        None => (passes.iter().map(|ps| ps.h.clone()).collect::<Vec<Vec<f64>>>(), Vec::new(), Vec::new(), Vec::new()),
    };

    let preds: Vec<f64> = z.iter().map(|zb| dot(&params.out_weights, zb) + params.out_bias).collect();
    let mse = preds.iter().zip(labels).map(|(a, y)| (a - y) * (a - y)).sum::<f64>() / bf;
    let loss = mse + l2_w * dot(&params.w, &params.w) + l2_out * dot(&params.out_weights, &params.out_weights);

    let g: Vec<f64> = preds.iter().zip(labels).map(|(a, y)| 2.0 * (a - y) / bf).collect();
    let mut d_out: Vec<f64> = params.out_weights.iter().map(|a| 2.0 * l2_out * a).collect();
    for (gb, zb) in g.iter().zip(&z) {
        for k in 0..width {
            d_out[k] += gb * zb[k];
        }
    }
    let d_bias: f64 = g.iter().sum();
    let dz: Vec<Vec<f64>> = g.iter().map(|gb| params.out_weights.iter().map(|a| gb * a).collect()).collect();

    let (dh, d_gamma, d_beta) = match &params.bn_state {
        Some(bn) => {
            let mut d_gamma = vec![0.0; width];
            let mut d_beta = vec![0.0; width];
            let mut sum_dhat = vec![0.0; width];
            let mut sum_dhat_hhat = vec![0.0; width];
            for b in 0..nb {
                for k in 0..width {
                    d_gamma[k] += dz[b][k] * hhat[b][k];
                    d_beta[k] += dz[b][k];
                    let dhat = dz[b][k] * bn.gamma[k];
                    sum_dhat[k] += dhat;
                    sum_dhat_hhat[k] += dhat * hhat[b][k];
                }
            }
            let dh = (0..nb)
                .map(|b| {
                    (0..width)
                        .map(|k| {
                            let sd = (var[k] + BN_EPS).sqrt();
                            let dhat = dz[b][k] * bn.gamma[k];
                            (bf * dhat - sum_dhat[k] - hhat[b][k] * sum_dhat_hhat[k]) / (bf * sd)
                        })
                        .collect()
                })
                .collect();
            (dh, d_gamma, d_beta)
        }
        None => (dz, Vec::new(), Vec::new()),
    };

    // through the pair normalization (phase mode) to the pooled (cos, sin)
    let d_pooled: Vec<Vec<f64>> = passes
        .iter()
        .zip(&dh)
        .map(|(ps, dhb)| match params.mode {
            NetMode::Fourier => dhb.clone(),
            NetMode::Phase => {
                let mut out = vec![0.0; width];
                for j in 0..m {
                    let r = ps.norms[j];
                    if r <= params.norm_floor {
                        continue;
                    }
                    let (uc, us) = (ps.h[2 * j], ps.h[2 * j + 1]);
                    let proj = uc * dhb[2 * j] + us * dhb[2 * j + 1];
                    out[2 * j] = (dhb[2 * j] - uc * proj) / r;
                    out[2 * j + 1] = (dhb[2 * j + 1] - us * proj) / r;
                }
                out
            }
        })
        .collect();

    // through the mean of (cos xᵀω, sin xᵀω) to W
    let per_bag: Vec<Vec<f64>> = bags
        .par_iter()
        .zip(d_pooled.par_iter())
        .map(|(bag, dp)| {
            let n = bag.len() as f64;
            let mut dw = vec![0.0; p * m];
            for i in 0..bag.len() {
                let x = bag.point(i);
                for j in 0..m {
                    let f: f64 = (0..p).map(|k| x[k] * params.w[k * m + j]).sum();
                    let (s, c) = sin_cos(f);
                    let coef = (-s * dp[2 * j] + c * dp[2 * j + 1]) / n;
                    for k in 0..p {
                        dw[k * m + j] += coef * x[k];
                    }
                }
            }
            dw
        })
        .collect();
    let mut d_w: Vec<f64> = params.w.iter().map(|w| 2.0 * l2_w * w).collect();
    for dw in &per_bag {
        for (a, b) in d_w.iter_mut().zip(dw) {
            *a += b;
        }
    }
    Ok(LossEval {
        loss,
        mse,
        grads: Gradients {
            w: d_w,
            out_weights: d_out,
            out_bias: d_bias,
            bn_gamma: d_gamma,
            bn_beta: d_beta,
        },
        batch_mean: mean,
        batch_var: var,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub m: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `lr_t = lr₀ / (1 + lr_decay · epoch)`.
    pub lr_decay: f64,
    pub l2_w: f64,
    pub l2_out: f64,
    pub batch_norm: bool,
    /// Initial frequency scale `γ₀`; the median heuristic when absent.
    pub gamma0: Option<f64>,
    pub norm_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            m: 50,
            epochs: 120,
            batch_size: 10,
            learning_rate: 0.01,
            lr_decay: 0.01,
            l2_w: 1e-4,
            l2_out: 1e-4,
            batch_norm: true,
            gamma0: None,
            norm_floor: DEFAULT_NORM_FLOOR,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.m == 0 {
            return Err(Error::invalid("epochs, batch_size and m must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lr_decay >= 0.0 && self.l2_w >= 0.0 && self.l2_out >= 0.0) {
            return Err(Error::invalid("lr_decay and L2 coefficients must be nonnegative"));
        }
        check_floor(self.norm_floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNet {
    pub params: FreqNetParams,
    /// Mean training MSE per epoch.
    pub loss_trace: Vec<f64>,
}

/// Initial parameters: `W` with i.i.d. `N(0, 1/γ₀²)` entries, zero output
/// weights, output bias at the label mean.
pub fn init_params(p: usize, mode: NetMode, config: &TrainConfig, gamma0: f64, label_mean: f64, seed: u64) -> Result<FreqNetParams> {
    let freqs = sample_gaussian_frequencies(p, config.m, gamma0, derive_seed(seed, stream::INIT))?;
    let m = config.m;
    let mut w = vec![0.0; p * m];
    for j in 0..m {
        for (k, v) in freqs.omega(j).iter().enumerate() {
            w[k * m + j] = *v;
        }
    }
    let params = FreqNetParams {
        p,
        m,
        mode,
        w,
        out_weights: vec![0.0; 2 * m],
        out_bias: label_mean,
        bn_state: config.batch_norm.then(|| BatchNormState::new(2 * m)),
        norm_floor: config.norm_floor,
    };
    params.validate()?;
    Ok(params)
}

/// Trains by mini-batch ADAM; deterministic given `seed`.
pub fn train(bags: &[Bag], labels: &[f64], mode: NetMode, config: &TrainConfig, seed: u64) -> Result<TrainedNet> {
    config.validate()?;
    if bags.len() < 2 {
        return Err(Error::invalid("training needs at least two bags"));
    }
    if labels.len() != bags.len() || labels.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("labels must be finite, one per bag"));
    }
    let p = bags[0].dim();
    let gamma0 = match config.gamma0 {
        Some(g) => g,
        None => {
            let refs: Vec<&Bag> = bags.iter().collect();
            median_heuristic(&refs, DEFAULT_MEDIAN_POINTS, seed)?.gamma0()
        }
    };
    let label_mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let mut params = init_params(p, mode, config, gamma0, label_mean, seed)?;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len());
    let mut order: Vec<usize> = (0..bags.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let epoch_seed = derive_seed(seed, stream::EPOCH);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng_from_seed(derive_seed(epoch_seed, epoch as u64)));
        let lr = config.learning_rate / (1.0 + config.lr_decay * epoch as f64);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let refs: Vec<&Bag> = batch.iter().map(|&i| &bags[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| labels[i]).collect();
            let eval = loss_and_grad(&params, &refs, &ys, config.l2_w, config.l2_out)?;
            total += eval.mse * batch.len() as f64;
            if !eval.loss.is_finite() {
                trace.push(f64::NAN);
                return Err(Error::Diverged { epoch, trace });
            }
            if let Some(bn) = &mut params.bn_state {
                for k in 0..bn.running_mean.len() {
                    bn.running_mean[k] = BN_MOMENTUM * bn.running_mean[k] + (1.0 - BN_MOMENTUM) * eval.batch_mean[k];
                    bn.running_var[k] = BN_MOMENTUM * bn.running_var[k] + (1.0 - BN_MOMENTUM) * eval.batch_var[k];
                }
            }
            let descent: Vec<f64> = eval.grads.flatten().iter().map(|g| -g).collect();
            adam.step(&mut flat, &descent, lr);
            params.unflatten(&flat);
        }
        let epoch_loss = total / bags.len() as f64;
        trace.push(epoch_loss);
        if !epoch_loss.is_finite() || !all_finite(&flat) {
            return Err(Error::Diverged { epoch, trace });
        }
    }
    Ok(TrainedNet { params, loss_trace: trace })
}

/// For each learned frequency `ω_j`, the raw modulus `‖Ê ξ_ω(X)‖` averaged over bags.
pub fn learned_frequency_norms(params: &FreqNetParams, bags: &[Bag]) -> Result<Vec<f64>> {
    let refs: Vec<&Bag> = bags.iter().collect();
    check_bags(params, &refs)?;
    let per_bag: Vec<Vec<f64>> = refs.par_iter().map(|b| bag_pass(params, b).norms).collect();
    let mut out = vec![0.0; params.m];
    for norms in &per_bag {
        for (o, v) in out.iter_mut().zip(norms) {
            *o += v / bags.len() as f64;
        }
    }
    Ok(out)
}

/// Pooled `(cos, sin)` means of one bag, before any normalization.
pub fn pooled_features(params: &FreqNetParams, bag: &Bag) -> Result<Vec<f64>> {
    check_bags(params, &[bag])?;
    Ok(bag_pass(params, bag).pooled)
}
