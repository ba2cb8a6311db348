//! Distances between bags over a fixed frequency set.
//!
//! * [`mmd_rff`]: `‖Φ(P̂_X) − Φ(P̂_Y)‖²`, the random-feature approximation of MMD².
//! * [`phd_hat`]: `‖Ψ(P̂_X) − Ψ(P̂_Y)‖²`, the plug-in phase discrepancy. Equal to
//!   `2 − 2⟨Ψ_X, Ψ_Y⟩` whenever no frequency is clamped.
//! * [`mmd_paired_differences`]: `(4/m) Σ_j [Ê sin ω_jᵀ(X_i − Y_i)]²`, the MMD between
//!   `X − Y` and `Y − X`. It is a diagnostic only: its value depends on the
//!   amplitude of the noise components, so it is not used as a learning feature.
//!
//! All three are V-statistics over the given frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{check_floor, fourier_features, phase_features, Bag, TrigCache, SUM_CHUNK};
use crate::spectral::FrequencySet;
use crate::trig::sin_cos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyKind {
    MmdRff,
    Phd,
    MmdPairedDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyValue {
    pub value: f64,
    pub kind: DiscrepancyKind,
    pub m: usize,
}

fn same_dim(x: &Bag, y: &Bag) -> Result<()> {
    x.check_dim(y.dim())
}

pub fn mmd_rff(x: &Bag, y: &Bag, freqs: &FrequencySet) -> Result<DiscrepancyValue> {
    same_dim(x, y)?;
    let fx = fourier_features(x, freqs)?;
    let fy = fourier_features(y, freqs)?;
    Ok(DiscrepancyValue {
        value: fx.squared_distance(&fy),
        kind: DiscrepancyKind::MmdRff,
        m: freqs.m(),
    })
}

pub fn phd_hat(x: &Bag, y: &Bag, freqs: &FrequencySet, norm_floor: f64) -> Result<DiscrepancyValue> {
    same_dim(x, y)?;
    let px = phase_features(x, freqs, norm_floor)?;
    let py = phase_features(y, freqs, norm_floor)?;
    Ok(DiscrepancyValue {
        value: px.squared_distance(&py),
        kind: DiscrepancyKind::Phd,
        m: freqs.m(),
    })
}

/// MMD between the paired differences `X_i − Y_i` and `Y_i − X_i` (index pairing).
pub fn mmd_paired_differences(x: &Bag, y: &Bag, freqs: &FrequencySet) -> Result<DiscrepancyValue> {
    same_dim(x, y)?;
    x.check_dim(freqs.dim())?;
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "paired differences need equal bag sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (n, d, m) = (x.len(), x.dim(), freqs.m());
    let mut diff = vec![0.0; d];
    let mut total = 0.0;
    for j in 0..m {
        let w = freqs.omega(j);
        let mut sum = 0.0;
        for start in (0..n).step_by(SUM_CHUNK) {
            let mut part = 0.0;
            for i in start..(start + SUM_CHUNK).min(n) {
                for ((dk, a), b) in diff.iter_mut().zip(x.point(i)).zip(y.point(i)) {
                    *dk = a - b;
                }
                let arg: f64 = w.iter().zip(&diff).map(|(a, b)| a * b).sum();
                part += sin_cos(arg).0;
            }
            sum += part;
        }
        let mean = sum / n as f64;
        total += mean * mean;
    }
    Ok(DiscrepancyValue {
        value: 4.0 * total / m as f64,
        kind: DiscrepancyKind::MmdPairedDiff,
        m,
    })
}

/// Phase discrepancy from per-frequency means, without allocating feature vectors.
pub(crate) fn phd_from_means(re_x: &[f64], im_x: &[f64], re_y: &[f64], im_y: &[f64], norm_floor: f64) -> f64 {
    let m = re_x.len();
    let mut acc = 0.0;
    for j in 0..m {
        let nx = (re_x[j] * re_x[j] + im_x[j] * im_x[j]).sqrt().max(norm_floor);
        let ny = (re_y[j] * re_y[j] + im_y[j] * im_y[j]).sqrt().max(norm_floor);
        let dc = re_x[j] / nx - re_y[j] / ny;
        let ds = im_x[j] / nx - im_y[j] / ny;
        acc += dc * dc + ds * ds;
    }
    acc / m as f64
}

/// Paired-difference MMD for bags `a` and `b` whose points live in `cache`
/// (rows `a_start..a_start+n` and `b_start..b_start+n`), via
/// `sin(u − v) = sin u cos v − cos u sin v`.
pub fn paired_differences_cached(cache: &TrigCache, a_start: usize, b_start: usize, n: usize) -> f64 {
    let m = cache.m();
    let mut sums = vec![0.0; m];
    for i in 0..n {
        let (ca, sa) = (cache.cos_row(a_start + i), cache.sin_row(a_start + i));
        let (cb, sb) = (cache.cos_row(b_start + i), cache.sin_row(b_start + i));
        for j in 0..m {
            sums[j] += sa[j] * cb[j] - ca[j] * sb[j];
        }
    }
    let nf = n as f64;
    4.0 * sums.iter().map(|s| (s / nf) * (s / nf)).sum::<f64>() / m as f64
}

/// Validates a norm floor; exposed for callers that precompute means.
pub fn validate_norm_floor(norm_floor: f64) -> Result<()> {
    check_floor(norm_floor)
}
