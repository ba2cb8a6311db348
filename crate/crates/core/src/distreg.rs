//! Distribution regression: bag → first-level embedding → optional second-level
//! Gaussian random-feature map → ridge regression.
//!
//! | method | first level | second level |
//! |--------|-------------|--------------|
//! | GLRR   | Fourier     | linear       |
//! | PLRR   | phase       | linear       |
//! | LGRR   | bag mean    | Gaussian RFF |
//! | PGRR   | phase       | Gaussian RFF |
//! | GGRR   | Fourier     | Gaussian RFF |
//!
//! Ridge fits center both labels and feature columns, so a fitted model predicts
//! `ȳ + (f − f̄)ᵀβ`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::add_uniform_variance_noise;
use crate::error::{Error, Result};
use crate::features::{check_floor, fourier_features, phase_features, Bag, DEFAULT_NORM_FLOOR};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::spectral::{median_heuristic, sample_gaussian_frequencies, FrequencySet, DEFAULT_MEDIAN_POINTS};

pub const DEFAULT_FREQUENCIES: usize = 75;
pub const DEFAULT_FOLDS: usize = 3;
pub const DEFAULT_SCALE_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Nine log-spaced ridge penalties from 1e-6 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..9).map(|k| 10f64.powi(k - 6)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstLevel {
    Fourier,
    Phase,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondLevel {
    Linear,
    GaussianRff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Glrr,
    Plrr,
    Lgrr,
    Pgrr,
    Ggrr,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Glrr, Method::Plrr, Method::Lgrr, Method::Pgrr, Method::Ggrr];

    pub fn levels(self) -> (FirstLevel, SecondLevel) {
        match self {
            Method::Glrr => (FirstLevel::Fourier, SecondLevel::Linear),
            Method::Plrr => (FirstLevel::Phase, SecondLevel::Linear),
            Method::Lgrr => (FirstLevel::Mean, SecondLevel::GaussianRff),
            Method::Pgrr => (FirstLevel::Phase, SecondLevel::GaussianRff),
            Method::Ggrr => (FirstLevel::Fourier, SecondLevel::GaussianRff),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Glrr => "glrr",
            Method::Plrr => "plrr",
            Method::Lgrr => "lgrr",
            Method::Pgrr => "pgrr",
            Method::Ggrr => "ggrr",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown regression method '{s}'")))
    }
}

/// A fully specified feature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub first_level: FirstLevel,
    pub second_level: SecondLevel,
    pub first_freqs: Option<FrequencySet>,
    pub second_freqs: Option<FrequencySet>,
    pub norm_floor: f64,
}

impl FeatureMap {
    fn validate(&self) -> Result<()> {
        check_floor(self.norm_floor)?;
        if (self.first_level == FirstLevel::Mean) != self.first_freqs.is_none() {
            return Err(Error::invalid("first-level frequencies are required exactly for fourier/phase"));
        }
        if (self.second_level == SecondLevel::Linear) != self.second_freqs.is_none() {
            return Err(Error::invalid("second-level frequencies are required exactly for gaussian_rff"));
        }
        Ok(())
    }

    /// Dimension of a first-level row for `d`-dimensional bags.
    pub fn first_dim(&self, d: usize) -> usize {
        match &self.first_freqs {
            Some(f) => 2 * f.m(),
            None => d,
        }
    }
}

fn first_level_row(bag: &Bag, level: FirstLevel, freqs: Option<&FrequencySet>, norm_floor: f64) -> Result<Vec<f64>> {
    Ok(match (level, freqs) {
        (FirstLevel::Mean, _) => bag.mean(),
        (FirstLevel::Fourier, Some(f)) => fourier_features(bag, f)?.values,
        (FirstLevel::Phase, Some(f)) => phase_features(bag, f, norm_floor)?.values,
        _ => return Err(Error::invalid("missing first-level frequencies")),
    })
}

fn first_level_rows(bags: &[Bag], level: FirstLevel, freqs: Option<&FrequencySet>, norm_floor: f64) -> Result<Vec<Vec<f64>>> {
    if let Some(b) = bags.first() {
        for other in bags {
            other.check_dim(b.dim())?;
        }
    }
    bags.par_iter().map(|b| first_level_row(b, level, freqs, norm_floor)).collect()
}

/// Applies the Gaussian random-feature map to every row.
fn second_level_rows(rows: &[Vec<f64>], freqs: &FrequencySet) -> Result<Vec<Vec<f64>>> {
    rows.par_iter()
        .map(|r| Ok(fourier_features(&Bag::new(r.clone(), r.len())?, freqs)?.values))
        .collect()
}

fn to_matrix(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged design rows"));
    }
    Ok(DMatrix::from_row_iterator(n, p, rows.into_iter().flatten()))
}

/// Design matrix with one row per bag.
pub fn featurize_bags(bags: &[Bag], map: &FeatureMap) -> Result<DMatrix<f64>> {
    map.validate()?;
    let rows = first_level_rows(bags, map.first_level, map.first_freqs.as_ref(), map.norm_floor)?;
    let rows = match &map.second_freqs {
        Some(f) => second_level_rows(&rows, f)?,
        None => rows,
    };
    to_matrix(rows)
}

/// Solution of a centered ridge problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    /// Label mean `ȳ`.
    pub intercept: f64,
    pub feature_means: Vec<f64>,
    pub ridge_lambda: f64,
    /// `‖(F_cᵀF_c + nλI)β − F_cᵀ(y − ȳ)‖ / ‖F_cᵀ(y − ȳ)‖` (0 when the right side vanishes).
    pub relative_residual: f64,
}

impl RidgeFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.feature_means)
                .zip(&self.weights)
                .map(|((f, m), w)| (f - m) * w)
                .sum::<f64>()
    }
}

fn floored_eigen_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let eig = a.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = top * f64::EPSILON * a.nrows() as f64;
    let coef = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_iterator(
        coef.len(),
        coef.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c / l.max(floor).max(f64::MIN_POSITIVE)),
    );
    &eig.eigenvectors * scaled
}

/// Ridge regression on centered features and labels:
/// `(F_cᵀF_c + nλI)β = F_cᵀ(y − ȳ)`, solved by Cholesky with one refinement
/// step, falling back to an eigenvalue-floored solve.
pub fn fit_ridge(design: &DMatrix<f64>, labels: &[f64], lambda: f64) -> Result<RidgeFit> {
    let (n, p) = design.shape();
    if n < 2 {
        return Err(Error::invalid("ridge regression needs at least two bags"));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    if design.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entries in the ridge design or labels".into()));
    }
    let ybar = labels.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = (0..p).map(|k| design.column(k).mean()).collect();
    let mut fc = design.clone();
    for k in 0..p {
        fc.column_mut(k).add_scalar_mut(-means[k]);
    }
    let yc = DVector::from_iterator(n, labels.iter().map(|y| y - ybar));
    let a = fc.tr_mul(&fc) + DMatrix::<f64>::identity(p, p) * (n as f64 * lambda);
    let b = fc.tr_mul(&yc);
    let beta = match a.clone().cholesky() {
        Some(ch) => {
            let mut beta = ch.solve(&b);
            let r = &b - &a * &beta;
            beta += ch.solve(&r);
            beta
        }
        None => floored_eigen_solve(&a, &b),
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ridge solve produced non-finite weights".into()));
    }
    let bn = b.norm();
    let relative_residual = if bn > 0.0 { (&a * &beta - &b).norm() / bn } else { (&a * &beta).norm() };
    Ok(RidgeFit {
        weights: beta.iter().copied().collect(),
        intercept: ybar,
        feature_means: means,
        ridge_lambda: lambda,
        relative_residual,
    })
}

/// Cross-validation outcome over a `(scale, lambda)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub folds: usize,
    pub grid: Vec<(f64, f64)>,
    pub chosen: (f64, f64),
    /// Per grid point, the RMSE on each fold.
    pub cv_scores: Vec<Vec<f64>>,
}

impl TuningRecord {
    pub fn mean_score(&self, k: usize) -> f64 {
        self.cv_scores[k].iter().sum::<f64>() / self.cv_scores[k].len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    pub method: Method,
    pub m_first: usize,
    pub m_second: usize,
    /// Multipliers applied to the median-heuristic frequency scale `1/γ₀`.
    pub scale_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub norm_floor: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            method: Method::Plrr,
            m_first: DEFAULT_FREQUENCIES,
            m_second: DEFAULT_FREQUENCIES,
            scale_grid: DEFAULT_SCALE_GRID.to_vec(),
            lambda_grid: default_lambda_grid(),
            folds: DEFAULT_FOLDS,
            norm_floor: DEFAULT_NORM_FLOOR,
        }
    }
}

impl RegressionConfig {
    pub fn for_method(method: Method) -> Self {
        RegressionConfig { method, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.scale_grid.is_empty() || self.lambda_grid.is_empty() {
            return Err(Error::invalid("scale and lambda grids must be non-empty"));
        }
        if self.scale_grid.iter().chain(&self.lambda_grid).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("grid values must be positive and finite"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("cross-validation needs at least two folds"));
        }
        if self.m_first == 0 || self.m_second == 0 {
            return Err(Error::invalid("frequency counts must be positive"));
        }
        check_floor(self.norm_floor)
    }
}

/// Unscaled frequency draws for a training set; the scale multiplier is applied later.
struct BaseFrequencies {
    first: Option<FrequencySet>,
    seed: u64,
}

impl BaseFrequencies {
    fn new(bags: &[Bag], config: &RegressionConfig, seed: u64) -> Result<Self> {
        let (first_level, _) = config.method.levels();
        let first = if first_level == FirstLevel::Mean {
            None
        } else {
            let refs: Vec<&Bag> = bags.iter().collect();
            let gamma0 = median_heuristic(&refs, DEFAULT_MEDIAN_POINTS, seed)?.gamma0();
            let d = bags[0].dim();
            Some(sample_gaussian_frequencies(d, config.m_first, gamma0, derive_seed(seed, stream::FREQS))?)
        };
        Ok(BaseFrequencies { first, seed })
    }

    /// First-level rows and the fully scaled feature map for multiplier `r`.
    fn map_for(&self, bags: &[Bag], config: &RegressionConfig, r: f64) -> Result<(FeatureMap, Vec<Vec<f64>>)> {
        let (first_level, second_level) = config.method.levels();
        let first_freqs = self.first.as_ref().map(|f| f.rescaled(r)).transpose()?;
        let rows = first_level_rows(bags, first_level, first_freqs.as_ref(), config.norm_floor)?;
        let second_freqs = match second_level {
            SecondLevel::Linear => None,
            SecondLevel::GaussianRff => {
                let dim = rows[0].len();
                let pooled = Bag::new(rows.iter().flatten().copied().collect(), dim)?;
                let gamma0 = median_heuristic(&[&pooled], DEFAULT_MEDIAN_POINTS, derive_seed(self.seed, 1))?.gamma0();
                let base = sample_gaussian_frequencies(dim, config.m_second, gamma0, derive_seed(self.seed, stream::FREQS_SECOND))?;
                Some(base.rescaled(r)?)
            }
        };
        let map = FeatureMap {
            first_level,
            second_level,
            first_freqs,
            second_freqs,
            norm_floor: config.norm_floor,
        };
        Ok((map, rows))
    }
}

/// Fold index per bag. Bags sharing a `group` always land in the same fold.
pub fn group_folds(bags: &[Bag], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut units: Vec<Vec<usize>> = Vec::new();
    let mut by_group: HashMap<&str, usize> = HashMap::new();
    for (i, b) in bags.iter().enumerate() {
        match b.group.as_deref() {
            Some(g) => {
                let u = *by_group.entry(g).or_insert_with(|| {
                    units.push(Vec::new());
                    units.len() - 1
                });
                units[u].push(i);
            }
            None => units.push(vec![i]),
        }
    }
    if units.len() < folds {
        return Err(Error::invalid(format!(
            "fewer independent bags or groups ({}) than folds ({folds})",
            units.len()
        )));
    }
    units.shuffle(&mut rng_from_seed(derive_seed(seed, stream::FOLDS)));
    let mut assign = vec![0; bags.len()];
    for (k, unit) in units.iter().enumerate() {
        for &i in unit {
            assign[i] = k % folds;
        }
    }
    Ok(assign)
}

/// Train/test index split keeping groups intact; roughly `test_fraction` of the
/// groups go to the test side.
pub fn group_split(bags: &[Bag], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test_fraction must lie in (0, 1)"));
    }
    let k = (1.0 / test_fraction).round().max(2.0) as usize;
    let folds = group_folds(bags, k, derive_seed(seed, stream::SPLIT))?;
    let (test, train): (Vec<usize>, Vec<usize>) = (0..bags.len()).partition(|&i| folds[i] == 0);
    Ok((train, test))
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    (pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64).sqrt()
}

fn labels_of(bags: &[Bag]) -> Result<Vec<f64>> {
    bags.iter()
        .map(|b| b.label.ok_or_else(|| Error::invalid(format!("bag '{}' has no label", b.id))))
        .collect()
}

fn better(score: f64, r: f64, lambda: f64, best: Option<(f64, f64, f64)>) -> bool {
    match best {
        None => true,
        Some((s, br, bl)) => score < s || (score == s && (lambda > bl || (lambda == bl && r > br))),
    }
}

/// Grid search over `(scale multiplier, lambda)` by k-fold cross-validation.
///
/// Frequencies are drawn once from the shared seed and rescaled per multiplier;
/// the multiplier applies to every random-feature level of the method.
pub fn cross_validate(bags: &[Bag], config: &RegressionConfig, seed: u64) -> Result<TuningRecord> {
    config.validate()?;
    let labels = labels_of(bags)?;
    if bags.len() < config.folds {
        return Err(Error::invalid(format!("{} bags for {} folds", bags.len(), config.folds)));
    }
    let folds = group_folds(bags, config.folds, seed)?;
    let base = BaseFrequencies::new(bags, config, seed)?;
    let mut grid = Vec::new();
    let mut cv_scores = Vec::new();
    for &r in &config.scale_grid {
        let (map, rows) = base.map_for(bags, config, r)?;
        let rows = match &map.second_freqs {
            Some(f) => second_level_rows(&rows, f)?,
            None => rows,
        };
        let design = to_matrix(rows)?;
        let per_lambda: Vec<Vec<f64>> = config
            .lambda_grid
            .par_iter()
            .map(|&lambda| {
                (0..config.folds)
                    .map(|k| {
                        let train: Vec<usize> = (0..bags.len()).filter(|&i| folds[i] != k).collect();
                        let test: Vec<usize> = (0..bags.len()).filter(|&i| folds[i] == k).collect();
                        let fit = fit_ridge(
                            &design.select_rows(&train),
                            &train.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
                            lambda,
                        )?;
                        let pred: Vec<f64> = test.iter().map(|&i| fit.predict_row(design.row(i).clone_owned().as_slice())).collect();
                        Ok(rmse(&pred, &test.iter().map(|&i| labels[i]).collect::<Vec<_>>()))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for (lambda, scores) in config.lambda_grid.iter().zip(per_lambda) {
            grid.push((r, *lambda));
            cv_scores.push(scores);
        }
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for (k, &(r, lambda)) in grid.iter().enumerate() {
        let s = cv_scores[k].iter().sum::<f64>() / config.folds as f64;
        if !s.is_finite() {
            return Err(Error::Numerical("non-finite cross-validation score".into()));
        }
        if better(s, r, lambda, best) {
            best = Some((s, r, lambda));
        }
    }
    let (_, r, lambda) = best.expect("non-empty grid");
    Ok(TuningRecord {
        folds: config.folds,
        grid,
        chosen: (r, lambda),
        cv_scores,
    })
}

/// A trained distribution-regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub method: Method,
    pub map: FeatureMap,
    pub fit: RidgeFit,
    pub tuning: Option<TuningRecord>,
}

impl RegressionModel {
    /// Fits with fixed hyperparameters (scale multiplier `r`, penalty `lambda`).
    pub fn fit_fixed(bags: &[Bag], config: &RegressionConfig, r: f64, lambda: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let labels = labels_of(bags)?;
        let base = BaseFrequencies::new(bags, config, seed)?;
        let (map, _) = base.map_for(bags, config, r)?;
        let design = featurize_bags(bags, &map)?;
        let fit = fit_ridge(&design, &labels, lambda)?;
        Ok(RegressionModel {
            method: config.method,
            map,
            fit,
            tuning: None,
        })
    }

    /// Cross-validates the grid, then refits on all bags at the chosen point.
    pub fn train(bags: &[Bag], config: &RegressionConfig, seed: u64) -> Result<Self> {
        let tuning = cross_validate(bags, config, seed)?;
        let (r, lambda) = tuning.chosen;
        let mut model = Self::fit_fixed(bags, config, r, lambda, seed)?;
        model.tuning = Some(tuning);
        Ok(model)
    }

    pub fn predict(&self, bags: &[Bag]) -> Result<Vec<f64>> {
        let design = featurize_bags(bags, &self.map)?;
        if design.ncols() != self.fit.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.fit.weights.len(),
                got: design.ncols(),
            });
        }
        Ok((0..design.nrows())
            .map(|i| self.fit.predict_row(design.row(i).clone_owned().as_slice()))
            .collect())
    }

    pub fn rmse(&self, bags: &[Bag]) -> Result<f64> {
        Ok(rmse(&self.predict(bags)?, &labels_of(bags)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    pub sigma: f64,
    pub rmse: f64,
}

/// Test RMSE when every test bag receives noise `N(0, Z)`, `Z` diagonal with
/// `z_k ~ U[0, σ v_k]` drawn per bag, where `v_k` is the variance of coordinate
/// `k` over all clean test points.
pub fn covariate_shift_eval(model: &RegressionModel, test_bags: &[Bag], sigmas: &[f64], seed: u64) -> Result<Vec<ShiftPoint>> {
    if test_bags.is_empty() {
        return Err(Error::invalid("no test bags"));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::invalid("noise levels must be nonnegative"));
    }
    let refs: Vec<&Bag> = test_bags.iter().collect();
    let v = Bag::pooled(&refs)?.variance();
    let base = derive_seed(seed, stream::NOISE);
    sigmas
        .iter()
        .enumerate()
        .map(|(si, &sigma)| {
            let max_var: Vec<f64> = v.iter().map(|vk| sigma * vk).collect();
            let noisy: Vec<Bag> = test_bags
                .par_iter()
                .enumerate()
                .map(|(b, bag)| {
                    let mut rng = rng_from_seed(derive_seed(derive_seed(base, si as u64), b as u64));
                    add_uniform_variance_noise(bag, &max_var, &mut rng)
                })
                .collect::<Result<_>>()?;
            Ok(ShiftPoint { sigma, rmse: model.rmse(&noisy)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_regression_bags;
    use proptest::prelude::*;

    fn small_config(method: Method) -> RegressionConfig {
        RegressionConfig {
            method,
            m_first: 20,
            m_second: 20,
            ..Default::default()
        }
    }

    #[test]
    fn method_table() {
        assert_eq!(Method::Lgrr.levels(), (FirstLevel::Mean, SecondLevel::GaussianRff));
        assert_eq!(Method::Plrr.levels(), (FirstLevel::Phase, SecondLevel::Linear));
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn mean_linear_rows_are_bag_means() {
        let bags = gen_regression_bags(4, 30, 2, 0.0, 1).unwrap();
        let map = FeatureMap {
            first_level: FirstLevel::Mean,
            second_level: SecondLevel::Linear,
            first_freqs: None,
            second_freqs: None,
            norm_floor: DEFAULT_NORM_FLOOR,
        };
        let f = featurize_bags(&bags, &map).unwrap();
        for (i, b) in bags.iter().enumerate() {
            assert_eq!(f.row(i).iter().copied().collect::<Vec<_>>(), b.mean());
        }
    }

    #[test]
    fn phase_rows_of_single_points_have_unit_norm_and_rff_shape() {
        let bags: Vec<Bag> = (0..5).map(|i| Bag::new(vec![i as f64 * 0.3, 1.0], 2).unwrap()).collect();
        let f1 = sample_gaussian_frequencies(2, 7, 1.0, 1).unwrap();
        let map = FeatureMap {
            first_level: FirstLevel::Phase,
            second_level: SecondLevel::Linear,
            first_freqs: Some(f1.clone()),
            second_freqs: None,
            norm_floor: DEFAULT_NORM_FLOOR,
        };
        let f = featurize_bags(&bags, &map).unwrap();
        for i in 0..5 {
            assert!((f.row(i).norm() - 1.0).abs() < 1e-12);
        }
        let map = FeatureMap {
            first_level: FirstLevel::Fourier,
            second_level: SecondLevel::GaussianRff,
            first_freqs: Some(f1),
            second_freqs: Some(sample_gaussian_frequencies(14, 9, 1.0, 2).unwrap()),
            norm_floor: DEFAULT_NORM_FLOOR,
        };
        assert_eq!(featurize_bags(&bags, &map).unwrap().shape(), (5, 18));
    }

    #[test]
    fn constant_labels_give_zero_weights() {
        let design = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0, 2.0, 2.0]);
        let fit = fit_ridge(&design, &[3.5; 4], 1e-3).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-15));
        assert_eq!(fit.intercept, 3.5);
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda() {
        let bags = gen_regression_bags(40, 50, 1, 0.1, 3).unwrap();
        let design = featurize_bags(
            &bags,
            &FeatureMap {
                first_level: FirstLevel::Phase,
                second_level: SecondLevel::Linear,
                first_freqs: Some(sample_gaussian_frequencies(1, 10, 1.0, 0).unwrap()),
                second_freqs: None,
                norm_floor: DEFAULT_NORM_FLOOR,
            },
        )
        .unwrap();
        let labels: Vec<f64> = bags.iter().map(|b| b.label.unwrap()).collect();
        let mut last = f64::INFINITY;
        for lambda in default_lambda_grid() {
            let fit = fit_ridge(&design, &labels, lambda).unwrap();
            let norm = fit.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(norm <= last * (1.0 + 1e-12));
            assert!(fit.relative_residual <= 1e-8);
            last = norm;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn single_feature_matches_simple_regression() {
        let f = [0.3, 1.1, -0.4, 2.0, 0.7, 1.5];
        let y = [1.0, 2.9, -0.2, 5.1, 2.2, 3.4];
        let n = f.len() as f64;
        let (mf, my) = (f.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = f.iter().zip(&y).map(|(a, b)| (a - mf) * (b - my)).sum();
        let var: f64 = f.iter().map(|a| (a - mf) * (a - mf)).sum();
        let fit = fit_ridge(&DMatrix::from_column_slice(6, 1, &f), &y, 1e-9).unwrap();
        assert!((fit.weights[0] - cov / var).abs() < 1e-6);
        assert!((fit.predict_row(&[mf]) - my).abs() < 1e-12);
    }

    #[test]
    fn ridge_rejects_bad_input() {
        let d = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(fit_ridge(&d, &[1.0, 2.0], 1.0).unwrap_err().is_numerical());
        let d = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(fit_ridge(&d, &[1.0, 2.0], 0.0).is_err());
        assert!(fit_ridge(&DMatrix::from_row_slice(1, 1, &[1.0]), &[1.0], 1.0).is_err());
    }

    #[test]
    fn single_grid_point_is_chosen_and_ties_prefer_larger_values() {
        let bags = gen_regression_bags(30, 40, 1, 0.0, 4).unwrap();
        let cfg = RegressionConfig {
            scale_grid: vec![2.0],
            lambda_grid: vec![0.1],
            ..small_config(Method::Plrr)
        };
        assert_eq!(cross_validate(&bags, &cfg, 1).unwrap().chosen, (2.0, 0.1));

        // Constant labels: every grid point scores identically.
        let flat: Vec<Bag> = bags.iter().cloned().map(|b| b.with_label(0.5)).collect();
        let cfg = RegressionConfig {
            scale_grid: vec![1.0, 4.0, 1.0],
            lambda_grid: vec![1e-3, 10.0, 10.0],
            ..small_config(Method::Glrr)
        };
        let rec = cross_validate(&flat, &cfg, 1).unwrap();
        assert_eq!(rec.chosen, (4.0, 10.0));
        assert_eq!(rec.grid.len(), 9);
    }

    #[test]
    fn mean_method_wins_on_mean_driven_data() {
        // Gaussian bags with label = mean and a random spread: the sample mean is
        // the efficient estimator of the label, so no representation can beat it
        // beyond selection noise.
        use rand::Rng as _;
        let mut rng = rng_from_seed(5);
        let bags: Vec<Bag> = (0..60)
            .map(|i| {
                let mu: f64 = rng.random_range(-2.0..2.0);
                let s: f64 = rng.random_range(0.5..2.0);
                let pts = (0..400).map(|_| mu + s * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                Bag::new(pts, 1).unwrap().with_label(mu).with_id(format!("b{i}"))
            })
            .collect();
        let best = |m: Method| {
            let rec = cross_validate(&bags, &small_config(m), 2).unwrap();
            (0..rec.grid.len()).map(|k| rec.mean_score(k)).fold(f64::INFINITY, f64::min)
        };
        let lgrr = best(Method::Lgrr);
        // Linear regression on bag means, tuned over the same lambda grid.
        let mean_linear = {
            let design = DMatrix::from_iterator(60, 1, bags.iter().map(|b| b.mean()[0]));
            let labels: Vec<f64> = bags.iter().map(|b| b.label.unwrap()).collect();
            let folds = group_folds(&bags, 3, 2).unwrap();
            default_lambda_grid()
                .into_iter()
                .map(|lambda| {
                    let mut se = 0.0;
                    for k in 0..3 {
                        let tr: Vec<usize> = (0..60).filter(|&i| folds[i] != k).collect();
                        let fit = fit_ridge(&design.select_rows(&tr), &tr.iter().map(|&i| labels[i]).collect::<Vec<_>>(), lambda).unwrap();
                        let te: Vec<usize> = (0..60).filter(|&i| folds[i] == k).collect();
                        let p: Vec<f64> = te.iter().map(|&i| fit.predict_row(&[design[(i, 0)]])).collect();
                        se += rmse(&p, &te.iter().map(|&i| labels[i]).collect::<Vec<_>>());
                    }
                    se / 3.0
                })
                .fold(f64::INFINITY, f64::min)
        };
        for m in [Method::Glrr, Method::Plrr, Method::Pgrr, Method::Ggrr] {
            let b = best(m);
            assert!(mean_linear <= b, "{m}: {mean_linear} vs {b}");
        }
        assert!(lgrr < 0.3);
    }

    #[test]
    fn folds_keep_groups_together() {
        let mut bags = gen_regression_bags(20, 5, 1, 0.0, 1).unwrap();
        for (i, b) in bags.iter_mut().enumerate() {
            if i < 12 {
                b.group = Some(format!("g{}", i / 4));
            }
        }
        let folds = group_folds(&bags, 3, 9).unwrap();
        for g in 0..3 {
            let f: Vec<usize> = (g * 4..g * 4 + 4).map(|i| folds[i]).collect();
            assert!(f.iter().all(|x| *x == f[0]));
        }
        let (train, test) = group_split(&bags, 0.25, 1).unwrap();
        assert_eq!(train.len() + test.len(), 20);
        for g in 0..3 {
            let inside = (g * 4..g * 4 + 4).filter(|i| test.contains(i)).count();
            assert!(inside == 0 || inside == 4);
        }
        let grouped: Vec<Bag> = bags.iter().cloned().map(|b| b.with_group("same")).collect();
        assert!(group_folds(&grouped, 2, 0).is_err());
    }

    #[test]
    fn zero_shift_reproduces_clean_rmse() {
        let bags = gen_regression_bags(60, 50, 2, 0.0, 6).unwrap();
        let model = RegressionModel::train(&bags[..45], &small_config(Method::Plrr), 1).unwrap();
        let clean = model.rmse(&bags[45..]).unwrap();
        let pts = covariate_shift_eval(&model, &bags[45..], &[0.0, 1.0], 2).unwrap();
        assert_eq!(pts[0].rmse, clean);
        assert!(pts[1].rmse.is_finite());
        assert!(model.fit.relative_residual <= 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn prediction_ignores_point_order(seed in any::<u64>(), method in 0usize..5) {
            let bags = gen_regression_bags(12, 15, 2, 0.2, seed).unwrap();
            let cfg = RegressionConfig { m_first: 8, m_second: 8, ..RegressionConfig::for_method(Method::ALL[method]) };
            let model = RegressionModel::fit_fixed(&bags, &cfg, 1.0, 1e-2, seed).unwrap();
            let reversed: Vec<Bag> = bags.iter().map(|b| b.select(&(0..b.len()).rev().collect::<Vec<_>>()).unwrap()).collect();
            let a = model.predict(&bags).unwrap();
            let b = model.predict(&reversed).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            prop_assert!(model.fit.relative_residual <= 1e-8);
        }
    }
}
