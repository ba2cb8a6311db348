//! Two-sample tests that target the indecomposable part of a distribution.
//!
//! * [`me_test`]: linear-time mean-embedding test with optimized test locations.
//!   Sensitive to every difference, including added symmetric noise.
//! * [`sme_test`]: the ME test applied to paired differences `X − Y` and `Y − X`.
//!   Rejects only when the distributions differ beyond a symmetric positive-definite
//!   component.
//! * [`phd_permutation_test`]: permutation test on the phase discrepancy.

mod me;
mod permutation;
mod sme;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub use me::{me_statistic, me_test, MeConfig};
pub use permutation::{default_phd_frequencies, phd_permutation_test, PhdConfig, DEFAULT_PERMUTATIONS, DEFAULT_PHD_FREQUENCIES};
pub use sme::sme_test;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Me,
    Sme,
    Phd,
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestMethod::Me => "me",
            TestMethod::Sme => "sme",
            TestMethod::Phd => "phd",
        })
    }
}

impl std::str::FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "me" => Ok(TestMethod::Me),
            "sme" => Ok(TestMethod::Sme),
            "phd" => Ok(TestMethod::Phd),
            other => Err(Error::invalid(format!("unknown test method '{other}'"))),
        }
    }
}

/// Test locations (row-major `J×d`) and the Gaussian bandwidth of the ME kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestLocations {
    pub locations: Vec<f64>,
    pub j: usize,
    pub d: usize,
    pub gaussian_bandwidth: f64,
}

impl TestLocations {
    pub fn new(locations: Vec<f64>, d: usize, gaussian_bandwidth: f64) -> Result<Self> {
        if d == 0 || locations.is_empty() || !locations.len().is_multiple_of(d) {
            return Err(Error::invalid("locations must be a non-empty J×d matrix"));
        }
        if !(gaussian_bandwidth > 0.0 && gaussian_bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth must be positive and finite"));
        }
        if locations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("locations must be finite"));
        }
        Ok(TestLocations {
            j: locations.len() / d,
            locations,
            d,
            gaussian_bandwidth,
        })
    }

    pub fn location(&self, j: usize) -> &[f64] {
        &self.locations[j * self.d..(j + 1) * self.d]
    }
}

/// Result of a two-sample test. ME and SME carry a threshold, the permutation
/// test carries a p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: TestMethod,
    pub statistic: f64,
    pub threshold: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub alpha: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locations: Option<TestLocations>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Upper `1 − alpha` quantile of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_quantile(dof: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

/// Two-sided normal-approximation band for a rejection rate over `runs` repetitions.
pub fn wald_band(alpha: f64, runs: usize, z: f64) -> (f64, f64) {
    let half = z * (alpha * (1.0 - alpha) / runs as f64).sqrt();
    (alpha - half, alpha + half)
}

/// The `z` used for the 99% band.
pub const WALD_Z99: f64 = 2.57;
