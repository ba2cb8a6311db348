use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_alpha, TestMethod, TestOutcome};
use crate::discrepancy::phd_from_means;
use crate::error::{Error, Result};
use crate::features::{check_floor, Bag, TrigCache, DEFAULT_NORM_FLOOR};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::spectral::{sample_radial_frequencies, FrequencySet};

pub const DEFAULT_PERMUTATIONS: usize = 400;
pub const DEFAULT_PHD_FREQUENCIES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhdConfig {
    pub permutations: usize,
    pub alpha: f64,
    pub norm_floor: f64,
}

impl Default for PhdConfig {
    fn default() -> Self {
        PhdConfig {
            permutations: DEFAULT_PERMUTATIONS,
            alpha: 0.05,
            norm_floor: DEFAULT_NORM_FLOOR,
        }
    }
}

/// Radial frequencies with `Σ = σ̂²I`, where `σ̂²` is the pooled per-coordinate
/// variance averaged over coordinates.
pub fn default_phd_frequencies(x: &Bag, y: &Bag, m: usize, seed: u64) -> Result<FrequencySet> {
    let pool = Bag::pooled(&[x, y])?;
    let var = pool.variance();
    let s2 = var.iter().sum::<f64>() / var.len() as f64;
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::DegenerateSample);
    }
    sample_radial_frequencies(pool.dim(), m, &vec![s2; pool.dim()], derive_seed(seed, stream::FREQS))
}

/// Permutation test on the phase discrepancy with a fixed frequency set.
///
/// The pooled sample is re-split in the original proportions `B` times;
/// `p = (1 + #{permuted ≥ observed}) / (B + 1)`.
pub fn phd_permutation_test(x: &Bag, y: &Bag, freqs: &FrequencySet, config: &PhdConfig, seed: u64) -> Result<TestOutcome> {
    check_alpha(config.alpha)?;
    check_floor(config.norm_floor)?;
    x.check_dim(y.dim())?;
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("permutation test needs two non-empty samples"));
    }
    if config.permutations == 0 {
        return Err(Error::invalid("number of permutations must be at least 1"));
    }
    let (nx, n) = (x.len(), x.len() + y.len());
    let m = freqs.m();
    let cache = TrigCache::new(&Bag::pooled(&[x, y])?, freqs)?;

    let stat = |idx: &[usize], buf: &mut [Vec<f64>; 4]| -> f64 {
        let [rx, ix, ry, iy] = buf;
        cache.means_into(&idx[..nx], rx, ix);
        cache.means_into(&idx[nx..], ry, iy);
        phd_from_means(rx, ix, ry, iy, config.norm_floor)
    };
    let identity: Vec<usize> = (0..n).collect();
    let observed = stat(&identity, &mut std::array::from_fn(|_| vec![0.0; m]));

    let perm_seed = derive_seed(seed, stream::PERMUTATION);
    let exceed = (0..config.permutations)
        .into_par_iter()
        .map_init(
            || (identity.clone(), std::array::from_fn::<_, 4, _>(|_| vec![0.0; m])),
            |(idx, buf), b| {
                idx.copy_from_slice(&identity);
                idx.shuffle(&mut rng_from_seed(derive_seed(perm_seed, b as u64)));
                usize::from(stat(idx, buf) >= observed)
            },
        )
        .sum::<usize>();
    let p_value = (1 + exceed) as f64 / (config.permutations + 1) as f64;

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("permutations".into(), json!(config.permutations));
    diagnostics.insert("m".into(), json!(m));
    diagnostics.insert("frequency_set".into(), json!(freqs.id()));
    Ok(TestOutcome {
        method: TestMethod::Phd,
        statistic: observed,
        threshold: None,
        p_value: Some(p_value),
        reject: p_value <= config.alpha,
        alpha: config.alpha,
        seed,
        locations: None,
        diagnostics,
    })
}
