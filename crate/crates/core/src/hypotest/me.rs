use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_alpha, chi2_quantile, TestLocations, TestMethod, TestOutcome};
use crate::error::{Error, Result};
use crate::features::Bag;
use crate::optim::Adam;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::spectral::{median_heuristic, DEFAULT_MEDIAN_POINTS};

/// Settings of the mean-embedding test and of its location optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeConfig {
    /// Number of test locations.
    pub j: usize,
    pub alpha: f64,
    /// Fraction of each sample used to optimize locations and bandwidth.
    pub train_fraction: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Covariance ridge relative to `trace(S)/J`.
    pub reg: f64,
    /// Initial location jitter, relative to the median-heuristic bandwidth.
    pub jitter: f64,
}

impl Default for MeConfig {
    fn default() -> Self {
        MeConfig {
            j: 10,
            alpha: 0.05,
            train_fraction: 0.2,
            iterations: 200,
            learning_rate: 0.05,
            reg: 1e-5,
            jitter: 0.1,
        }
    }
}

impl MeConfig {
    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.j == 0 {
            return Err(Error::invalid("J must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.reg > 0.0 && self.jitter >= 0.0) {
            return Err(Error::invalid("learning_rate and reg must be positive, jitter nonnegative"));
        }
        Ok(())
    }
}

const MAX_ESCALATIONS: usize = 12;

/// Paired rows `x_i`, `y_i` (row-major, `n×d`).
struct Paired<'a> {
    x: &'a [f64],
    y: &'a [f64],
    n: usize,
    d: usize,
}

struct Evaluation {
    lambda: f64,
    reg_used: f64,
    grad_v: Vec<f64>,
    grad_log_sigma: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// `λ = n z̄ᵀ(S + γI)⁻¹z̄` and, on request, its gradient in `V` and `log σ`.
fn evaluate(data: &Paired, v: &[f64], sigma: f64, reg: f64, with_grad: bool) -> Result<Evaluation> {
    let (n, d) = (data.n, data.d);
    let j = v.len() / d;
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut kx = vec![0.0; n * j];
    let mut ky = vec![0.0; n * j];
    let mut z = DMatrix::<f64>::zeros(n, j);
    for i in 0..n {
        let xi = &data.x[i * d..(i + 1) * d];
        let yi = &data.y[i * d..(i + 1) * d];
        for l in 0..j {
            let vl = &v[l * d..(l + 1) * d];
            let a = (-sq_dist(xi, vl) * inv2s2).exp();
            let b = (-sq_dist(yi, vl) * inv2s2).exp();
            kx[i * j + l] = a;
            ky[i * j + l] = b;
            z[(i, l)] = a - b;
        }
    }
    let zbar = DVector::from_iterator(j, (0..j).map(|l| z.column(l).mean()));
    let mut centered = z.clone();
    for i in 0..n {
        for l in 0..j {
            centered[(i, l)] -= zbar[l];
        }
    }
    let s = centered.transpose() * &centered / (n as f64 - 1.0);
    let trace = s.trace();
    let relative = trace > 0.0;
    let base = if relative { trace / j as f64 } else { 1.0 };

    let mut reg_used = reg;
    let mut chol = None;
    for _ in 0..=MAX_ESCALATIONS {
        let gamma = reg_used * base;
        let a = &s + DMatrix::<f64>::identity(j, j) * gamma;
        if let Some(c) = a.cholesky() {
            chol = Some(c);
            break;
        }
        reg_used *= 10.0;
    }
    let chol = chol.ok_or_else(|| {
        Error::Numerical("covariance of test features is singular after regularization escalation".into())
    })?;
    let a = chol.solve(&zbar);
    let nf = n as f64;
    let lambda = nf * zbar.dot(&a);
    if !lambda.is_finite() {
        return Err(Error::Numerical("non-finite ME statistic".into()));
    }
    if !with_grad {
        return Ok(Evaluation {
            lambda,
            reg_used,
            grad_v: Vec::new(),
            grad_log_sigma: 0.0,
        });
    }

    let kappa = if relative {
        nf * a.norm_squared() * (reg_used / j as f64) * 2.0 / (nf - 1.0)
    } else {
        0.0
    };
    let c = &centered * &a;
    let s2 = 1.0 / (sigma * sigma);
    let mut grad_v = vec![0.0; j * d];
    let mut grad_log_sigma = 0.0;
    for i in 0..n {
        let xi = &data.x[i * d..(i + 1) * d];
        let yi = &data.y[i * d..(i + 1) * d];
        let scale = 2.0 - 2.0 * nf * c[i] / (nf - 1.0);
        for l in 0..j {
            let g = a[l] * scale - kappa * centered[(i, l)];
            let (ka, kb) = (kx[i * j + l], ky[i * j + l]);
            let vl = &v[l * d..(l + 1) * d];
            let gv = &mut grad_v[l * d..(l + 1) * d];
            for k in 0..d {
                gv[k] += g * (ka * (xi[k] - vl[k]) - kb * (yi[k] - vl[k])) * s2;
            }
            grad_log_sigma += g * (ka * sq_dist(xi, vl) - kb * sq_dist(yi, vl)) * s2;
        }
    }
    Ok(Evaluation {
        lambda,
        reg_used,
        grad_v,
        grad_log_sigma,
    })
}

/// ME statistic of paired samples `x`, `y` at fixed locations.
pub fn me_statistic(x: &Bag, y: &Bag, locations: &TestLocations, reg: f64) -> Result<f64> {
    x.check_dim(locations.d)?;
    y.check_dim(locations.d)?;
    let n = x.len().min(y.len());
    let d = locations.d;
    let data = Paired {
        x: &x.points()[..n * d],
        y: &y.points()[..n * d],
        n,
        d,
    };
    Ok(evaluate(&data, &locations.locations, locations.gaussian_bandwidth, reg, false)?.lambda)
}

fn take_rows(points: &[f64], d: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| points[i * d..(i + 1) * d].iter().copied()).collect()
}

/// Linear-time mean-embedding two-sample test.
///
/// Both samples are shuffled and truncated to the smaller size. The first
/// `train_fraction` of the pairs tunes the locations and bandwidth by ADAM ascent on
/// the regularized statistic; the rest is tested against `χ²_J(1 − alpha)`.
pub fn me_test(x: &Bag, y: &Bag, config: &MeConfig, seed: u64) -> Result<TestOutcome> {
    config.validate()?;
    x.check_dim(y.dim())?;
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("ME test needs two non-empty samples"));
    }
    let d = x.dim();
    let j = config.j;
    let n = x.len().min(y.len());
    let n_train = ((config.train_fraction * n as f64).floor() as usize).max(1);
    let n_test = n - n_train.min(n);
    if n_test < j + 1 {
        return Err(Error::InsufficientSamples { needed: j + 1, got: n_test });
    }
    if n_train < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n_train });
    }

    let mut rng = rng_from_seed(derive_seed(seed, stream::SPLIT));
    let mut ix: Vec<usize> = (0..x.len()).collect();
    let mut iy: Vec<usize> = (0..y.len()).collect();
    ix.shuffle(&mut rng);
    iy.shuffle(&mut rng);
    let x_train = take_rows(x.points(), d, &ix[..n_train]);
    let y_train = take_rows(y.points(), d, &iy[..n_train]);
    let x_test = take_rows(x.points(), d, &ix[n_train..n]);
    let y_test = take_rows(y.points(), d, &iy[n_train..n]);
    let train = Paired {
        x: &x_train,
        y: &y_train,
        n: n_train,
        d,
    };
    let test = Paired {
        x: &x_test,
        y: &y_test,
        n: n_test,
        d,
    };

    // Initialization: pooled training points plus jitter, median-heuristic bandwidth.
    let pool = Bag::new([x_train.as_slice(), y_train.as_slice()].concat(), d)?;
    let gamma0 = median_heuristic(&[&pool], DEFAULT_MEDIAN_POINTS, seed)?.gamma0();
    let mut rng = rng_from_seed(derive_seed(seed, stream::INIT));
    let picks: Vec<usize> = if pool.len() >= j {
        index::sample(&mut rng, pool.len(), j).into_vec()
    } else {
        (0..j).map(|_| rng.random_range(0..pool.len())).collect()
    };
    let mut v: Vec<f64> = Vec::with_capacity(j * d);
    for &p in &picks {
        for &c in pool.point(p) {
            let e: f64 = rng.sample(StandardNormal);
            v.push(c + config.jitter * gamma0 * e);
        }
    }

    // ADAM over (V, log σ).
    let mut params: Vec<f64> = v.clone();
    params.push(gamma0.ln());
    let mut adam = Adam::new(params.len());
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut trace = Vec::with_capacity(config.iterations);
    let mut stopped_early = false;
    for _ in 0..=config.iterations {
        let (v_cur, log_sigma) = params.split_at(j * d);
        let v_cur = v_cur.to_vec();
        let sigma = log_sigma[0].exp();
        let eval = match evaluate(&train, &v_cur, sigma, config.reg, true) {
            Ok(e) => e,
            Err(_) => {
                stopped_early = true;
                break;
            }
        };
        trace.push(eval.lambda);
        if best.as_ref().is_none_or(|b| eval.lambda > b.0) {
            best = Some((eval.lambda, v_cur, sigma));
        }
        if trace.len() > config.iterations {
            break;
        }
        let mut grad = eval.grad_v;
        grad.push(eval.grad_log_sigma);
        if grad.iter().any(|g| !g.is_finite()) {
            stopped_early = true;
            break;
        }
        adam.step(&mut params, &grad, config.learning_rate);
    }
    let (train_lambda, v_best, sigma_best) =
        best.ok_or_else(|| Error::Numerical("ME objective could not be evaluated at initialization".into()))?;

    let test_eval = evaluate(&test, &v_best, sigma_best, config.reg, false)?;
    let threshold = chi2_quantile(j, config.alpha)?;

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("n_train".into(), json!(n_train));
    diagnostics.insert("n_test".into(), json!(n_test));
    if x.len() != y.len() {
        diagnostics.insert("truncated_from".into(), json!([x.len(), y.len()]));
    }
    diagnostics.insert("initial_bandwidth".into(), json!(gamma0));
    diagnostics.insert("train_statistic".into(), json!(train_lambda));
    diagnostics.insert("regularization".into(), json!(test_eval.reg_used));
    diagnostics.insert("optimization_trace".into(), json!(trace));
    if stopped_early {
        diagnostics.insert("optimizer_stopped_early".into(), json!(true));
    }
    Ok(TestOutcome {
        method: TestMethod::Me,
        statistic: test_eval.lambda,
        threshold: Some(threshold),
        p_value: None,
        reject: test_eval.lambda > threshold,
        alpha: config.alpha,
        seed,
        locations: Some(TestLocations::new(v_best, d, sigma_best)?),
        diagnostics,
    })
}
