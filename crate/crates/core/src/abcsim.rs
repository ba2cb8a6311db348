//! Phase-ABC and Fourier-ABC.
//!
//! A regressor trained on simulated `(bag, θ)` pairs serves as the summary
//! statistic `m(·)`. Particles `θ_k` drawn from the prior are weighted by
//! `exp(−|m(B_k) − m(B*)|² / ε)`.
//!
//! Hierarchical model, per bag: `θ ~ Gamma(α, rate β)`, `Z ~ U[0, σ]` (a
//! variance, drawn once per bag), and for every point and coordinate
//! `X = χ²(θ)/(2θ) + ε` with `ε ~ N(0, Z)`. The noiseless part has mean 1/2 for
//! every `θ`.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distreg::{Method, RegressionConfig, RegressionModel};
use crate::error::{Error, Result};
use crate::features::Bag;
use crate::freqnet::{self, FreqNetParams, NetMode, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierModelConfig {
    /// Prior shape.
    pub alpha: f64,
    /// Prior rate.
    pub beta: f64,
    /// Upper bound of the per-bag noise variance.
    pub sigma: f64,
    pub bag_size: usize,
    /// Number of i.i.d. coordinates per point.
    pub dims: usize,
}

impl Default for HierModelConfig {
    fn default() -> Self {
        HierModelConfig {
            alpha: 7.0,
            beta: 1.0,
            sigma: 0.0,
            bag_size: 100,
            dims: 1,
        }
    }
}

impl HierModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::invalid("prior shape and rate must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be nonnegative"));
        }
        if self.bag_size == 0 || self.dims == 0 {
            return Err(Error::invalid("bag_size and dims must be at least 1"));
        }
        Ok(())
    }

    pub fn prior_mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn prior_variance(&self) -> f64 {
        self.alpha / (self.beta * self.beta)
    }

    pub fn sample_prior(&self, rng: &mut Rng) -> Result<f64> {
        let g = Gamma::new(self.alpha, 1.0 / self.beta).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(g.sample(rng))
    }
}

/// One bag from the model, labelled with its `θ`; `θ` is drawn from the prior when `None`.
pub fn simulate_hier(config: &HierModelConfig, theta: Option<f64>, seed: u64) -> Result<Bag> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let theta = match theta {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::invalid(format!("theta must be positive, got {t}"))),
        None => config.sample_prior(&mut rng)?,
    };
    let chi2 = Gamma::new(theta / 2.0, 2.0).map_err(|e| Error::invalid(e.to_string()))?;
    let z = if config.sigma > 0.0 { rng.random_range(0.0..=config.sigma) } else { 0.0 };
    let sd = z.sqrt();
    let points = (0..config.bag_size * config.dims)
        .map(|_| {
            let x: f64 = chi2.sample(&mut rng) / (2.0 * theta);
            let e: f64 = rng.sample(StandardNormal);
            x + sd * e
        })
        .collect();
    Ok(Bag::new(points, config.dims)?.with_label(theta))
}

/// `n` labelled bags with prior draws; bag `i` uses a seed derived from `(seed, i)`.
pub fn simulate_dataset(config: &HierModelConfig, n: usize, seed: u64) -> Result<Vec<Bag>> {
    let base = derive_seed(seed, stream::DATA);
    (0..n)
        .into_par_iter()
        .map(|i| simulate_hier(config, None, derive_seed(base, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryKind {
    Phase,
    Fourier,
}

impl std::str::FromStr for SummaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(SummaryKind::Phase),
            "fourier" => Ok(SummaryKind::Fourier),
            other => Err(Error::invalid(format!("unknown summary kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryRegressor {
    /// Linear ridge on mean phase (PLRR) or Fourier (GLRR) features.
    Ridge,
    /// The learned-frequency network.
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub kind: SummaryKind,
    pub regressor: SummaryRegressor,
    pub n_train: usize,
    pub ridge: RegressionConfig,
    pub network: TrainConfig,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            kind: SummaryKind::Phase,
            regressor: SummaryRegressor::Ridge,
            n_train: 500,
            ridge: RegressionConfig::default(),
            network: TrainConfig::default(),
        }
    }
}

/// A trained summary statistic `m(·)`: bag to predicted `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regressor", rename_all = "lowercase")]
pub enum Summary {
    Ridge { model: RegressionModel },
    Network { params: FreqNetParams },
}

impl Summary {
    pub fn evaluate(&self, bags: &[Bag]) -> Result<Vec<f64>> {
        match self {
            Summary::Ridge { model } => model.predict(bags),
            Summary::Network { params } => {
                let refs: Vec<&Bag> = bags.iter().collect();
                freqnet::forward(params, &refs)
            }
        }
    }
}

/// Trains the summary regressor on `n_train` simulated bags.
pub fn train_summary(model: &HierModelConfig, config: &SummaryConfig, seed: u64) -> Result<Summary> {
    if config.n_train < 2 {
        return Err(Error::invalid("n_train must be at least 2"));
    }
    let bags = simulate_dataset(model, config.n_train, derive_seed(seed, stream::INIT))?;
    match config.regressor {
        SummaryRegressor::Ridge => {
            let method = match config.kind {
                SummaryKind::Phase => Method::Plrr,
                SummaryKind::Fourier => Method::Glrr,
            };
            let ridge = RegressionConfig { method, ..config.ridge.clone() };
            Ok(Summary::Ridge { model: RegressionModel::train(&bags, &ridge, seed)? })
        }
        SummaryRegressor::Network => {
            let mode = match config.kind {
                SummaryKind::Phase => NetMode::Phase,
                SummaryKind::Fourier => NetMode::Fourier,
            };
            let labels: Vec<f64> = bags.iter().map(|b| b.label.unwrap_or(f64::NAN)).collect();
            let net = freqnet::train(&bags, &labels, mode, &config.network, seed)?;
            Ok(Summary::Network { params: net.params })
        }
    }
}

/// Normalized ABC weights over prior particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub thetas: Vec<f64>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn posterior_mean(&self) -> f64 {
        self.thetas.iter().zip(&self.weights).map(|(t, w)| t * w).sum()
    }

    /// Effective sample size `1 / Σ w_k²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Simulated particles and their summaries, reusable across observed datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBank {
    pub thetas: Vec<f64>,
    pub summaries: Vec<f64>,
}

impl ParticleBank {
    pub fn simulate(summary: &Summary, model: &HierModelConfig, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("need at least one particle"));
        }
        let bags = simulate_dataset(model, k, derive_seed(seed, stream::PARTICLES))?;
        let summaries = summary.evaluate(&bags)?;
        let thetas = bags.iter().map(|b| b.label.expect("simulated bags are labelled")).collect();
        Ok(ParticleBank { thetas, summaries })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    fn squared_distances(&self, observed: f64) -> Vec<f64> {
        self.summaries.iter().map(|s| (s - observed).powi(2)).collect()
    }

    /// Weights `∝ exp(−(m_k − m*)² / ε)`.
    pub fn weights(&self, observed: f64, epsilon: f64) -> Result<ParticleSet> {
        let weights = kernel_weights(&self.squared_distances(observed), epsilon)?;
        Ok(ParticleSet { thetas: self.thetas.clone(), weights, epsilon })
    }

    /// Smallest `ε` (to a relative 1e-6 in log space) with `ESS ≥ target_fraction · K`.
    pub fn epsilon_for_ess(&self, observed: f64, target_fraction: f64) -> Result<f64> {
        epsilon_for_ess(&self.squared_distances(observed), target_fraction)
    }
}

/// Normalized Gaussian-kernel weights, computed in log space.
pub fn kernel_weights(squared_distances: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if squared_distances.is_empty() {
        return Err(Error::invalid("no particles"));
    }
    if !(epsilon > 0.0) || epsilon.is_nan() {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let logw: Vec<f64> = squared_distances.iter().map(|d| -d / epsilon).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::EpsilonTooSmall);
    }
    let raw: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

fn ess_of(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Bisection in `log ε` for the smallest `ε` reaching the target effective sample size.
pub fn epsilon_for_ess(squared_distances: &[f64], target_fraction: f64) -> Result<f64> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::invalid("target fraction must lie in (0, 1]"));
    }
    let k = squared_distances.len() as f64;
    let target = target_fraction * k;
    let reaches = |eps: f64| -> Result<bool> { Ok(ess_of(&kernel_weights(squared_distances, eps)?) >= target * (1.0 - 1e-12)) };
    let scale = squared_distances.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = ((scale * 1e-12).ln(), (scale * 1e12).ln());
    if !reaches(hi.exp())? {
        return Err(Error::Numerical("target effective sample size is unreachable".into()));
    }
    if reaches(lo.exp())? {
        return Ok(lo.exp());
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if reaches(mid.exp())? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

/// Algorithm-level entry: fresh particles for one observed bag.
pub fn abc_weights(summary: &Summary, observed: &Bag, model: &HierModelConfig, k: usize, epsilon: f64, seed: u64) -> Result<ParticleSet> {
    let bank = ParticleBank::simulate(summary, model, k, seed)?;
    let obs = summary.evaluate(std::slice::from_ref(observed))?[0];
    bank.weights(obs, epsilon)
}
