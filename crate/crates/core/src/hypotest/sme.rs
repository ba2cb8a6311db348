use rand::seq::SliceRandom;
use serde_json::json;

use super::{me_test, MeConfig, TestMethod, TestOutcome};
use crate::error::{Error, Result};
use crate::features::Bag;
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Symmetric mean-embedding test on paired samples of equal size.
///
/// After a seeded shuffle of the pairs, `W = X − Y` on the first half and
/// `Z = Y − X` on the second half are independent, and equal in distribution
/// exactly when `X − Y` is symmetric. The ME test is then run on `(W, Z)`.
pub fn sme_test(x: &Bag, y: &Bag, config: &MeConfig, seed: u64) -> Result<TestOutcome> {
    x.check_dim(y.dim())?;
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "SME test needs paired samples of equal size, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut n = x.len();
    if n < 4 {
        return Err(Error::InsufficientSamples { needed: 4, got: n });
    }
    let dropped = n % 2 == 1;
    if dropped {
        log::warn!("SME test: odd sample size {n}, dropping the last pair");
        n -= 1;
    }
    let d = x.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(derive_seed(seed, stream::SPLIT), 1)));
    let half = n / 2;
    let diff = |i: usize, sign: f64| -> Vec<f64> {
        x.point(i).iter().zip(y.point(i)).map(|(a, b)| sign * (a - b)).collect()
    };
    let w: Vec<f64> = order[..half].iter().flat_map(|&i| diff(i, 1.0)).collect();
    let z: Vec<f64> = order[half..].iter().flat_map(|&i| diff(i, -1.0)).collect();
    let mut out = me_test(&Bag::new(w, d)?, &Bag::new(z, d)?, config, seed)?;
    out.method = TestMethod::Sme;
    out.diagnostics.insert("half_size".into(), json!(half));
    if dropped {
        out.diagnostics.insert("dropped_last_pair".into(), json!(true));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn rows(n: usize, seed: u64, f: impl Fn(f64) -> f64) -> Bag {
        let mut rng = rng_from_seed(seed);
        Bag::new((0..n).map(|_| f(rng.sample(StandardNormal))).collect(), 1).unwrap()
    }

    #[test]
    fn needs_four_pairs() {
        let x = rows(3, 1, |v| v);
        assert!(matches!(
            sme_test(&x, &x, &MeConfig::default(), 0),
            Err(Error::InsufficientSamples { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn unequal_sizes_are_an_error() {
        assert!(sme_test(&rows(10, 1, |v| v), &rows(11, 2, |v| v), &MeConfig::default(), 0).is_err());
    }

    #[test]
    fn odd_size_drops_one_pair() {
        let x = rows(301, 1, |v| v);
        let y = rows(301, 2, |v| v);
        let out = sme_test(&x, &y, &MeConfig::default(), 5).unwrap();
        assert_eq!(out.diagnostics["half_size"], json!(150));
        assert_eq!(out.diagnostics["dropped_last_pair"], json!(true));
        assert_eq!(out.method, TestMethod::Sme);
    }

    #[test]
    fn detects_asymmetric_difference() {
        // X exponential-like, Y Gaussian: X − Y is skewed.
        let x = rows(2000, 1, |v| v * v);
        let y = rows(2000, 2, |v| v);
        let out = sme_test(&x, &y, &MeConfig::default(), 3).unwrap();
        assert!(out.reject, "statistic {}", out.statistic);
    }
}
