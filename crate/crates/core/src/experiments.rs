//! Monte Carlo drivers for the studies the CLI and the acceptance suite run.
//!
//! Each driver is a pure function of its config and seed. Repetition `r` always
//! gets the seed `derive_seed(…, r)`, so results do not depend on the thread count.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abcsim::{simulate_hier, train_summary, HierModelConfig, ParticleBank, Summary, SummaryConfig};
use crate::datagen::{add_diagonal_noise, gen_noisy_chisq_pair, gen_regression_bags, sample_same_phase_x, sample_same_phase_y, NoisyChiSqConfig};
use crate::discrepancy::{mmd_rff, paired_differences_cached, phd_hat};
use crate::distreg::{covariate_shift_eval, Method, RegressionConfig, RegressionModel};
use crate::error::{Error, Result};
use crate::features::{fourier_and_phase_features, Bag, TrigCache, DEFAULT_NORM_FLOOR};
use crate::freqnet::{self, learned_frequency_norms, NetMode, TrainConfig};
use crate::hypotest::{
    default_phd_frequencies, me_test, phd_permutation_test, sme_test, wald_band, MeConfig, PhdConfig, TestMethod, TestOutcome, WALD_Z99,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{median_heuristic, sample_gaussian_frequencies, DEFAULT_MEDIAN_POINTS};

/// Runs one test of the given kind on `(x, y)`.
pub fn run_test(method: TestMethod, x: &Bag, y: &Bag, me: &MeConfig, phd: &PhdConfig, phd_m: usize, seed: u64) -> Result<TestOutcome> {
    match method {
        TestMethod::Me => me_test(x, y, me, seed),
        TestMethod::Sme => sme_test(x, y, me, seed),
        TestMethod::Phd => {
            let freqs = default_phd_frequencies(x, y, phd_m, seed)?;
            phd_permutation_test(x, y, &freqs, phd, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub methods: Vec<TestMethod>,
    /// `(n1, n2)` noise-to-signal ratios for `X` and `Y`.
    pub noise_grid: Vec<(f64, f64)>,
    pub sample_sizes: Vec<usize>,
    pub d: usize,
    pub dof_x: f64,
    pub dof_y: f64,
    pub runs: usize,
    pub me: MeConfig,
    pub phd: PhdConfig,
    pub phd_frequencies: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            methods: vec![TestMethod::Me, TestMethod::Sme, TestMethod::Phd],
            noise_grid: vec![(0.0, 0.0), (0.0, 1.0), (1.0, 2.0)],
            sample_sizes: vec![1000],
            d: 5,
            dof_x: 4.0,
            dof_y: 4.0,
            runs: 300,
            me: MeConfig::default(),
            phd: PhdConfig::default(),
            phd_frequencies: crate::hypotest::DEFAULT_PHD_FREQUENCIES,
        }
    }
}

impl SweepConfig {
    /// Null sweep: both samples `χ²(4)/4`.
    pub fn type1() -> Self {
        SweepConfig::default()
    }

    /// Alternative `χ²(4)/4` against `χ²(8)/8`.
    pub fn power() -> Self {
        SweepConfig {
            dof_y: 8.0,
            noise_grid: vec![(0.0, 0.0), (0.2, 0.2), (1.0, 1.0)],
            sample_sizes: vec![250, 500, 1000, 2000],
            runs: 200,
            ..SweepConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if self.methods.is_empty() || self.noise_grid.is_empty() || self.sample_sizes.is_empty() {
            return Err(Error::invalid("methods, noise grid and sample sizes must be non-empty"));
        }
        crate::hypotest::check_alpha(self.me.alpha)?;
        crate::hypotest::check_alpha(self.phd.alpha)
    }
}

/// Rejection rate of one method at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub method: TestMethod,
    pub n1: f64,
    pub n2: f64,
    pub n: usize,
    pub runs: usize,
    pub rejections: usize,
    pub rate: f64,
    /// 99% Wald band around `alpha`.
    pub band_low: f64,
    pub band_high: f64,
}

/// Rejection rates for every method, noise pair and sample size. All methods
/// see the same data within a repetition.
pub fn run_rejection_sweep(config: &SweepConfig, seed: u64) -> Result<Vec<RateRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (gi, &(n1, n2)) in config.noise_grid.iter().enumerate() {
        for (si, &n) in config.sample_sizes.iter().enumerate() {
            let data_cfg = NoisyChiSqConfig {
                d: config.d,
                dof_x: config.dof_x,
                dof_y: config.dof_y,
                n1,
                n2,
                n,
            };
            data_cfg.validate()?;
            let point_seed = derive_seed(derive_seed(seed, gi as u64), si as u64);
            let decisions: Vec<Vec<bool>> = (0..config.runs)
                .into_par_iter()
                .map(|r| {
                    let run_seed = derive_seed(point_seed, r as u64);
                    let (x, y) = gen_noisy_chisq_pair(&data_cfg, run_seed)?;
                    config
                        .methods
                        .iter()
                        .map(|&m| Ok(run_test(m, &x, &y, &config.me, &config.phd, config.phd_frequencies, run_seed)?.reject))
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (mi, &method) in config.methods.iter().enumerate() {
                let rejections = decisions.iter().filter(|d| d[mi]).count();
                let alpha = if method == TestMethod::Phd { config.phd.alpha } else { config.me.alpha };
                let (band_low, band_high) = wald_band(alpha, config.runs, WALD_Z99);
                rows.push(RateRow {
                    method,
                    n1,
                    n2,
                    n,
                    runs: config.runs,
                    rejections,
                    rate: rejections as f64 / config.runs as f64,
                    band_low,
                    band_high,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairedDiffConfig {
    pub n_bags: usize,
    pub bag_size: usize,
    pub d: usize,
    pub m: usize,
    /// Per-bag noise variance is `U[0, noise_max]`, isotropic.
    pub noise_max: f64,
}

impl Default for PairedDiffConfig {
    fn default() -> Self {
        PairedDiffConfig {
            n_bags: 100,
            bag_size: 1000,
            d: 1,
            m: 100,
            noise_max: 0.1,
        }
    }
}

/// The three discrepancies for one `(X_i, Y_j)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValues {
    pub i: usize,
    pub j: usize,
    pub paired_mmd: f64,
    pub fourier: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDiffResult {
    pub noisy: Vec<PairValues>,
    pub clean: Vec<PairValues>,
    pub gamma0: f64,
}

fn mean_of(rows: &[PairValues], f: impl Fn(&PairValues) -> f64) -> f64 {
    rows.iter().map(f).sum::<f64>() / rows.len() as f64
}

impl PairedDiffResult {
    /// Means over the noisy pairs.
    pub fn noisy_means(&self) -> (f64, f64, f64) {
        (mean_of(&self.noisy, |r| r.paired_mmd), mean_of(&self.noisy, |r| r.fourier), mean_of(&self.noisy, |r| r.phase))
    }

    /// Noiseless reference values (means over the clean pairs).
    pub fn clean_means(&self) -> (f64, f64, f64) {
        (mean_of(&self.clean, |r| r.paired_mmd), mean_of(&self.clean, |r| r.fourier), mean_of(&self.clean, |r| r.phase))
    }
}

fn all_pairs(xs: &[Bag], ys: &[Bag], freqs: &crate::spectral::FrequencySet) -> Result<Vec<PairValues>> {
    let feats = |bags: &[Bag]| -> Result<Vec<_>> { bags.par_iter().map(|b| fourier_and_phase_features(b, freqs, DEFAULT_NORM_FLOOR)).collect() };
    let fx = feats(xs)?;
    let fy = feats(ys)?;
    let pool_rows: Vec<&Bag> = xs.iter().chain(ys).collect();
    let pool = Bag::pooled(&pool_rows)?;
    let cache = TrigCache::new(&pool, freqs)?;
    let n = xs[0].len();
    let nb = xs.len();
    Ok((0..nb * ys.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / ys.len(), k % ys.len());
            PairValues {
                i,
                j,
                paired_mmd: paired_differences_cached(&cache, i * n, (nb + j) * n, n),
                fourier: fx[i].0.squared_distance(&fy[j].0),
                phase: fx[i].1.squared_distance(&fy[j].1),
            }
        })
        .collect())
}

/// Paired-difference MMD, Fourier-feature distance and phase-feature distance for
/// every pair of `χ²(4)/4` and `χ²(8)/8` bags, with and without per-bag Gaussian noise.
pub fn run_paired_diff(config: &PairedDiffConfig, seed: u64) -> Result<PairedDiffResult> {
    if config.n_bags == 0 || config.bag_size == 0 || config.d == 0 || config.m == 0 {
        return Err(Error::invalid("n_bags, bag_size, d and m must be at least 1"));
    }
    if !(config.noise_max >= 0.0 && config.noise_max.is_finite()) {
        return Err(Error::invalid("noise_max must be nonnegative"));
    }
    let data_cfg = NoisyChiSqConfig { d: config.d, dof_x: 4.0, dof_y: 8.0, n1: 0.0, n2: 0.0, n: config.bag_size };
    let clean: Vec<(Bag, Bag)> = (0..config.n_bags)
        .into_par_iter()
        .map(|b| gen_noisy_chisq_pair(&data_cfg, derive_seed(seed, b as u64)))
        .collect::<Result<_>>()?;
    let noise_base = derive_seed(seed, u64::MAX);
    let noisy: Vec<(Bag, Bag)> = clean
        .par_iter()
        .enumerate()
        .map(|(b, (x, y))| {
            let mut rng = rng_from_seed(derive_seed(noise_base, b as u64));
            let mut noisy_one = |bag: &Bag| -> Result<Bag> {
                let z = if config.noise_max > 0.0 { rng.random_range(0.0..=config.noise_max) } else { 0.0 };
                add_diagonal_noise(bag, &vec![z; config.d], &mut rng)
            };
            Ok((noisy_one(x)?, noisy_one(y)?))
        })
        .collect::<Result<_>>()?;
    let (cx, cy): (Vec<Bag>, Vec<Bag>) = clean.into_iter().unzip();
    let (nx, ny): (Vec<Bag>, Vec<Bag>) = noisy.into_iter().unzip();
    let refs: Vec<&Bag> = cx.iter().chain(&cy).collect();
    let gamma0 = median_heuristic(&refs, DEFAULT_MEDIAN_POINTS, seed)?.gamma0();
    let freqs = sample_gaussian_frequencies(config.d, config.m, gamma0, derive_seed(seed, 1 << 32))?;
    Ok(PairedDiffResult {
        noisy: all_pairs(&nx, &ny, &freqs)?,
        clean: all_pairs(&cx, &cy, &freqs)?,
        gamma0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleResult {
    pub n: usize,
    pub m: usize,
    pub gamma0: f64,
    pub phd: f64,
    pub mmd: f64,
    /// Population PhD over the same frequencies (zero: the phases agree).
    pub oracle_phd: f64,
    /// Population MMD over the same frequencies from the closed-form characteristic functions.
    pub oracle_mmd: f64,
}

/// Estimates on the two symmetric fixtures whose characteristic functions share every phase.
pub fn run_counterexample(n: usize, m: usize, seed: u64) -> Result<CounterexampleResult> {
    let x = sample_same_phase_x(n, derive_seed(seed, 0))?;
    let y = sample_same_phase_y(n, derive_seed(seed, 1))?;
    let gamma0 = median_heuristic(&[&x, &y], DEFAULT_MEDIAN_POINTS, seed)?.gamma0();
    let freqs = sample_gaussian_frequencies(1, m, gamma0, derive_seed(seed, 2))?;
    let phd = phd_hat(&x, &y, &freqs, DEFAULT_NORM_FLOOR)?.value;
    let mmd = mmd_rff(&x, &y, &freqs)?.value;
    let phi_x = |w: f64| (1.0 - w * w) * (-w * w / 2.0).exp();
    let phi_y = |w: f64| (1.0 - w * w) / (1.0 + w * w).powi(2);
    let oracle_mmd = (0..m).map(|j| (phi_x(freqs.omega(j)[0]) - phi_y(freqs.omega(j)[0])).powi(2)).sum::<f64>() / m as f64;
    Ok(CounterexampleResult { n, m, gamma0, phd, mmd, oracle_phd: 0.0, oracle_mmd })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressShiftConfig {
    pub methods: Vec<Method>,
    pub n_train: usize,
    pub n_test: usize,
    pub bag_size: usize,
    pub d: usize,
    /// Noise scale of the training bags.
    pub train_noise: f64,
    pub sigmas: Vec<f64>,
    pub seeds: usize,
    pub m_first: usize,
    pub m_second: usize,
}

impl Default for RegressShiftConfig {
    fn default() -> Self {
        RegressShiftConfig {
            methods: vec![Method::Glrr, Method::Plrr, Method::Lgrr],
            n_train: 400,
            n_test: 100,
            bag_size: 500,
            d: 1,
            train_noise: 0.0,
            sigmas: vec![0.0, 0.5, 1.0, 2.0, 3.0],
            seeds: 20,
            m_first: crate::distreg::DEFAULT_FREQUENCIES,
            m_second: crate::distreg::DEFAULT_FREQUENCIES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub seed_index: usize,
    pub method: Method,
    pub sigma: f64,
    pub rmse: f64,
}

/// Trains every method on clean surrogate bags and scores test bags under growing noise.
pub fn run_regress_shift(config: &RegressShiftConfig, seed: u64) -> Result<Vec<ShiftRow>> {
    if config.seeds == 0 || config.n_train < 2 || config.n_test == 0 {
        return Err(Error::invalid("need seeds ≥ 1, n_train ≥ 2, n_test ≥ 1"));
    }
    let per_seed: Vec<Vec<ShiftRow>> = (0..config.seeds)
        .into_par_iter()
        .map(|s| {
            let rep = derive_seed(seed, s as u64);
            let bags = gen_regression_bags(config.n_train + config.n_test, config.bag_size, config.d, config.train_noise, rep)?;
            let (train, test) = bags.split_at(config.n_train);
            let mut rows = Vec::new();
            for &method in &config.methods {
                let cfg = RegressionConfig { method, m_first: config.m_first, m_second: config.m_second, ..Default::default() };
                let model = RegressionModel::train(train, &cfg, rep)?;
                for pt in covariate_shift_eval(&model, test, &config.sigmas, rep)? {
                    rows.push(ShiftRow { seed_index: s, method, sigma: pt.sigma, rmse: pt.rmse });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// How `ε` is chosen per observed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    Fixed(f64),
    /// Smallest `ε` whose effective sample size is at least this fraction of `K`.
    EssFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbcRunConfig {
    pub model: HierModelConfig,
    pub summary: SummaryConfig,
    pub particles: usize,
    pub observed: usize,
    pub epsilon: EpsilonRule,
}

impl Default for AbcRunConfig {
    fn default() -> Self {
        AbcRunConfig {
            model: HierModelConfig::default(),
            summary: SummaryConfig::default(),
            particles: 2000,
            observed: 100,
            epsilon: EpsilonRule::EssFraction(0.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcRow {
    pub theta: f64,
    pub posterior_mean: f64,
    pub ess: f64,
    pub epsilon: f64,
    /// `|Σw − 1|`.
    pub weight_sum_error: f64,
    /// Posterior mean when the bag mean is the summary.
    pub bag_mean_posterior_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcRunResult {
    pub rows: Vec<AbcRow>,
    pub mse: f64,
    pub bag_mean_mse: f64,
    pub prior_variance: f64,
    pub summary: Summary,
    /// Particles and weights for the first observed dataset.
    pub first_particles: crate::abcsim::ParticleSet,
}

/// Trains a summary, simulates one particle bank, and weights it for each observed dataset.
pub fn run_abc(config: &AbcRunConfig, seed: u64) -> Result<AbcRunResult> {
    config.model.validate()?;
    if config.observed == 0 {
        return Err(Error::invalid("need at least one observed dataset"));
    }
    let summary = train_summary(&config.model, &config.summary, derive_seed(seed, 0))?;
    let bank = ParticleBank::simulate(&summary, &config.model, config.particles, derive_seed(seed, 1))?;
    let obs_base = derive_seed(seed, 2);
    let observed: Vec<Bag> = (0..config.observed)
        .into_par_iter()
        .map(|i| simulate_hier(&config.model, None, derive_seed(obs_base, i as u64)))
        .collect::<Result<_>>()?;
    let obs_summaries = summary.evaluate(&observed)?;
    let mean_bank = bag_mean_bank(&config.model, config.particles, derive_seed(seed, 1))?;
    let mut rows = Vec::with_capacity(config.observed);
    let mut first = None;
    for (bag, &s) in observed.iter().zip(&obs_summaries) {
        let eps = match config.epsilon {
            EpsilonRule::Fixed(e) => e,
            EpsilonRule::EssFraction(f) => bank.epsilon_for_ess(s, f)?,
        };
        let post = bank.weights(s, eps)?;
        let bag_mean = bag.mean().iter().sum::<f64>() / bag.dim() as f64;
        let mean_eps = match config.epsilon {
            EpsilonRule::Fixed(e) => e,
            EpsilonRule::EssFraction(f) => mean_bank.epsilon_for_ess(bag_mean, f)?,
        };
        let mean_post = mean_bank.weights(bag_mean, mean_eps)?;
        rows.push(AbcRow {
            theta: bag.label.expect("simulated bags are labelled"),
            posterior_mean: post.posterior_mean(),
            ess: post.ess(),
            epsilon: eps,
            weight_sum_error: (post.weights.iter().sum::<f64>() - 1.0).abs(),
            bag_mean_posterior_mean: mean_post.posterior_mean(),
        });
        if first.is_none() {
            first = Some(post);
        }
    }
    let mse = rows.iter().map(|r| (r.posterior_mean - r.theta).powi(2)).sum::<f64>() / rows.len() as f64;
    let bag_mean_mse = rows.iter().map(|r| (r.bag_mean_posterior_mean - r.theta).powi(2)).sum::<f64>() / rows.len() as f64;
    Ok(AbcRunResult {
        rows,
        mse,
        bag_mean_mse,
        prior_variance: config.model.prior_variance(),
        summary,
        first_particles: first.expect("at least one observed dataset"),
    })
}

/// Particle bank over the same simulated bags as [`ParticleBank::simulate`] with the
/// same seed, summarized by the coordinate-averaged bag mean.
fn bag_mean_bank(model: &HierModelConfig, k: usize, seed: u64) -> Result<ParticleBank> {
    let bags = crate::abcsim::simulate_dataset(model, k, derive_seed(seed, crate::rng::stream::PARTICLES))?;
    Ok(ParticleBank {
        thetas: bags.iter().map(|b| b.label.expect("labelled")).collect(),
        summaries: bags.iter().map(|b| b.mean().iter().sum::<f64>() / b.dim() as f64).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreqnetDiagConfig {
    pub n_bags: usize,
    pub bag_size: usize,
    pub d: usize,
    pub noise_sigma: f64,
    pub train: TrainConfig,
}

impl Default for FreqnetDiagConfig {
    fn default() -> Self {
        FreqnetDiagConfig {
            n_bags: 300,
            bag_size: 200,
            d: 1,
            noise_sigma: 0.5,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqnetDiagResult {
    pub mode: NetMode,
    pub loss_trace: Vec<f64>,
    /// Mean raw modulus `‖Ê ξ_ω‖` per frequency, before training.
    pub initial_norms: Vec<f64>,
    /// Same, after training.
    pub learned_norms: Vec<f64>,
    pub params: freqnet::FreqNetParams,
}

/// Trains one network per mode on `bags` and reports per-frequency feature norms
/// before and after training.
pub fn freqnet_diag_on(bags: &[Bag], modes: &[NetMode], train: &TrainConfig, seed: u64) -> Result<Vec<FreqnetDiagResult>> {
    let labels: Vec<f64> = bags
        .iter()
        .map(|b| b.label.ok_or_else(|| Error::invalid("every bag needs a label")))
        .collect::<Result<_>>()?;
    if bags.is_empty() {
        return Err(Error::invalid("no bags"));
    }
    let gamma0 = match train.gamma0 {
        Some(g) => g,
        None => {
            let refs: Vec<&Bag> = bags.iter().collect();
            median_heuristic(&refs, DEFAULT_MEDIAN_POINTS, seed)?.gamma0()
        }
    };
    let fixed = TrainConfig { gamma0: Some(gamma0), ..*train };
    modes
        .iter()
        .map(|&mode| {
            let net = freqnet::train(bags, &labels, mode, &fixed, seed)?;
            let init = freqnet::init_params(bags[0].dim(), mode, &fixed, gamma0, 0.0, seed)?;
            Ok(FreqnetDiagResult {
                mode,
                loss_trace: net.loss_trace,
                initial_norms: learned_frequency_norms(&init, bags)?,
                learned_norms: learned_frequency_norms(&net.params, bags)?,
                params: net.params,
            })
        })
        .collect()
}

/// [`freqnet_diag_on`] for both modes on noisy surrogate bags.
pub fn run_freqnet_diag(config: &FreqnetDiagConfig, seed: u64) -> Result<Vec<FreqnetDiagResult>> {
    let bags = gen_regression_bags(config.n_bags, config.bag_size, config.d, config.noise_sigma, seed)?;
    freqnet_diag_on(&bags, &[NetMode::Fourier, NetMode::Phase], &config.train, seed)
}
