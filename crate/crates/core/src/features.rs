//! Bags, Fourier features, phase features and the empirical characteristic function.
//!
//! For a bag `{x_1..x_N}` and frequencies `ω_1..ω_m` the Fourier features are
//!
//! ```text
//! Φ = √(1/m) [Ê cos(ω_1ᵀx), Ê sin(ω_1ᵀx), …, Ê cos(ω_mᵀx), Ê sin(ω_mᵀx)]
//! ```
//!
//! and the phase features divide every `(cos, sin)` pair by its own norm, so
//! that `‖Ψ‖ = 1`. Averages over points are accumulated in fixed chunks of
//! [`SUM_CHUNK`] points and the chunk partials are added in order, which makes
//! the result independent of how many threads evaluate the chunks.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::FrequencySet;
use crate::trig::sin_cos;

/// Points per summation chunk.
pub const SUM_CHUNK: usize = 1024;

/// Default clamp for per-frequency norms in the phase normalization.
pub const DEFAULT_NORM_FLOOR: f64 = 1e-12;

/// A finite sample treated as one empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    points: Vec<f64>,
    dim: usize,
    pub id: String,
    pub label: Option<f64>,
    pub group: Option<String>,
}

impl Bag {
    /// Builds a bag from row-major points of dimension `dim`.
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("bag dimension must be at least 1"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "bag needs a non-empty multiple of {dim} values, got {}",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("bag contains non-finite values"));
        }
        Ok(Bag {
            points,
            dim,
            id: String::new(),
            label: None,
            group: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(rows.concat(), dim)
    }

    pub fn with_label(mut self, label: f64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points.chunks_exact(self.dim) {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Per-coordinate variance (divisor `N`).
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; self.dim];
        for p in self.points.chunks_exact(self.dim) {
            for k in 0..self.dim {
                v[k] += (p[k] - mean[k]).powi(2);
            }
        }
        let n = self.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    /// A copy with every point shifted by `t`.
    pub fn translated(&self, t: &[f64]) -> Result<Bag> {
        self.check_dim(t.len())?;
        let mut out = self.clone();
        for p in out.points.chunks_exact_mut(self.dim) {
            for (a, b) in p.iter_mut().zip(t) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// A bag holding the rows of `self` selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Bag> {
        let mut pts = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            pts.extend_from_slice(self.point(i));
        }
        let mut b = Bag::new(pts, self.dim)?;
        b.label = self.label;
        b.group = self.group.clone();
        b.id = self.id.clone();
        Ok(b)
    }

    /// Concatenation of the points of `bags` (labels dropped).
    pub fn pooled(bags: &[&Bag]) -> Result<Bag> {
        let dim = bags.first().map(|b| b.dim).unwrap_or(0);
        let mut pts = Vec::new();
        for b in bags {
            b.check_dim(dim)?;
            pts.extend_from_slice(&b.points);
        }
        Bag::new(pts, dim)
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: d,
            })
        }
    }

    pub(crate) fn points_mut(&mut self) -> &mut [f64] {
        &mut self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Fourier,
    Phase,
}

/// A length-`2m` feature vector in interleaved `(cos, sin)` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
    pub frequency_ref: String,
    /// Frequencies whose raw norm fell below the clamp (phase kind only).
    #[serde(default)]
    pub clamped: Vec<usize>,
}

impl FeatureVector {
    pub fn m(&self) -> usize {
        self.values.len() / 2
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn squared_distance(&self, other: &FeatureVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Empirical characteristic function evaluated at each frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFnEvaluation {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub modulus: Vec<f64>,
}

fn chunk_sums(chunk: &[f64], dim: usize, freqs: &FrequencySet) -> (Vec<f64>, Vec<f64>) {
    let m = freqs.m();
    let mut cos_sum = vec![0.0; m];
    let mut sin_sum = vec![0.0; m];
    for j in 0..m {
        let w = freqs.omega(j);
        let (mut c, mut s) = (0.0, 0.0);
        if dim == 1 {
            let w0 = w[0];
            for &x in chunk {
                let (si, co) = sin_cos(w0 * x);
                c += co;
                s += si;
            }
        } else {
            for x in chunk.chunks_exact(dim) {
                let arg: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                let (si, co) = sin_cos(arg);
                c += co;
                s += si;
            }
        }
        cos_sum[j] = c;
        sin_sum[j] = s;
    }
    (cos_sum, sin_sum)
}

/// Per-frequency means `(Ê cos ωᵀx, Ê sin ωᵀx)`.
fn trig_means(bag: &Bag, freqs: &FrequencySet) -> Result<(Vec<f64>, Vec<f64>)> {
    bag.check_dim(freqs.dim())?;
    let dim = bag.dim();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = if bag.len() > SUM_CHUNK {
        bag.points
            .par_chunks(SUM_CHUNK * dim)
            .map(|c| chunk_sums(c, dim, freqs))
            .collect()
    } else {
        vec![chunk_sums(&bag.points, dim, freqs)]
    };
    let m = freqs.m();
    let mut re = vec![0.0; m];
    let mut im = vec![0.0; m];
    for (c, s) in &partials {
        for j in 0..m {
            re[j] += c[j];
            im[j] += s[j];
        }
    }
    let n = bag.len() as f64;
    re.iter_mut().for_each(|v| *v /= n);
    im.iter_mut().for_each(|v| *v /= n);
    Ok((re, im))
}

/// Empirical characteristic function `φ̂(ω_j) = Ê exp(i ω_jᵀ x)`.
pub fn empirical_charfn(bag: &Bag, freqs: &FrequencySet) -> Result<CharFnEvaluation> {
    let (re, im) = trig_means(bag, freqs)?;
    let modulus = re
        .iter()
        .zip(&im)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect();
    Ok(CharFnEvaluation { re, im, modulus })
}

/// Interleaves `(re, im)` into a Fourier feature vector.
pub(crate) fn fourier_from_means(re: &[f64], im: &[f64], frequency_ref: String) -> FeatureVector {
    let scale = (1.0 / re.len() as f64).sqrt();
    let mut values = Vec::with_capacity(2 * re.len());
    for (c, s) in re.iter().zip(im) {
        values.push(c * scale);
        values.push(s * scale);
    }
    FeatureVector {
        values,
        kind: FeatureKind::Fourier,
        frequency_ref,
        clamped: Vec::new(),
    }
}

/// Normalizes each `(re, im)` pair and interleaves into a phase feature vector.
pub(crate) fn phase_from_means(re: &[f64], im: &[f64], norm_floor: f64, frequency_ref: String) -> FeatureVector {
    let scale = (1.0 / re.len() as f64).sqrt();
    let mut values = Vec::with_capacity(2 * re.len());
    let mut clamped = Vec::new();
    for (j, (c, s)) in re.iter().zip(im).enumerate() {
        let norm = (c * c + s * s).sqrt();
        let denom = if norm < norm_floor {
            clamped.push(j);
            norm_floor
        } else {
            norm
        };
        values.push(c / denom * scale);
        values.push(s / denom * scale);
    }
    FeatureVector {
        values,
        kind: FeatureKind::Phase,
        frequency_ref,
        clamped,
    }
}

/// Fourier features `Φ(P̂)` of a bag.
pub fn fourier_features(bag: &Bag, freqs: &FrequencySet) -> Result<FeatureVector> {
    let (re, im) = trig_means(bag, freqs)?;
    Ok(fourier_from_means(&re, &im, freqs.id()))
}

/// Phase features `Ψ(P̂)` of a bag; pairs with raw norm below `norm_floor`
/// are divided by the floor instead and listed in `clamped`.
pub fn phase_features(bag: &Bag, freqs: &FrequencySet, norm_floor: f64) -> Result<FeatureVector> {
    check_floor(norm_floor)?;
    let (re, im) = trig_means(bag, freqs)?;
    Ok(phase_from_means(&re, &im, norm_floor, freqs.id()))
}

/// Both feature maps from a single pass over the points.
pub fn fourier_and_phase_features(
    bag: &Bag,
    freqs: &FrequencySet,
    norm_floor: f64,
) -> Result<(FeatureVector, FeatureVector)> {
    check_floor(norm_floor)?;
    let (re, im) = trig_means(bag, freqs)?;
    Ok((
        fourier_from_means(&re, &im, freqs.id()),
        phase_from_means(&re, &im, norm_floor, freqs.id()),
    ))
}

pub(crate) fn check_floor(norm_floor: f64) -> Result<()> {
    if norm_floor > 0.0 && norm_floor.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("norm_floor must be positive, got {norm_floor}")))
    }
}

/// Precomputed `cos ω_jᵀx_i` and `sin ω_jᵀx_i` for a fixed pool of points,
/// so that features of many sub-bags (permutations, pairings) cost only additions.
#[derive(Debug, Clone)]
pub struct TrigCache {
    cos: Vec<f64>,
    sin: Vec<f64>,
    m: usize,
    n: usize,
}

impl TrigCache {
    pub fn new(pool: &Bag, freqs: &FrequencySet) -> Result<Self> {
        pool.check_dim(freqs.dim())?;
        let (m, n) = (freqs.m(), pool.len());
        let mut cos = vec![0.0; n * m];
        let mut sin = vec![0.0; n * m];
        cos.par_chunks_mut(m)
            .zip(sin.par_chunks_mut(m))
            .enumerate()
            .for_each(|(i, (c_row, s_row))| {
                let x = pool.point(i);
                for j in 0..m {
                    let arg: f64 = freqs.omega(j).iter().zip(x).map(|(a, b)| a * b).sum();
                    let (s, c) = sin_cos(arg);
                    c_row[j] = c;
                    s_row[j] = s;
                }
            });
        Ok(TrigCache { cos, sin, m, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn cos_row(&self, i: usize) -> &[f64] {
        &self.cos[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn sin_row(&self, i: usize) -> &[f64] {
        &self.sin[i * self.m..(i + 1) * self.m]
    }

    /// Per-frequency means over the points at `indices`, written into `re`/`im`.
    pub fn means_into(&self, indices: &[usize], re: &mut [f64], im: &mut [f64]) {
        re.iter_mut().for_each(|v| *v = 0.0);
        im.iter_mut().for_each(|v| *v = 0.0);
        for &i in indices {
            for (a, b) in re.iter_mut().zip(self.cos_row(i)) {
                *a += b;
            }
            for (a, b) in im.iter_mut().zip(self.sin_row(i)) {
                *a += b;
            }
        }
        let n = indices.len() as f64;
        re.iter_mut().for_each(|v| *v /= n);
        im.iter_mut().for_each(|v| *v /= n);
    }
}

/// Writes feature vectors as CSV: `bag_id,frequency_set,kind,f1..f2m`.
pub fn write_features_csv<W: Write>(writer: W, rows: &[(&str, &FeatureVector)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let width = rows.first().map(|(_, f)| f.values.len()).unwrap_or(0);
    let mut header = vec!["bag_id".to_string(), "frequency_set".into(), "kind".into()];
    header.extend((1..=width).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (id, f) in rows {
        if f.values.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: f.values.len(),
            });
        }
        let kind = match f.kind {
            FeatureKind::Fourier => "fourier",
            FeatureKind::Phase => "phase",
        };
        let mut row = vec![id.to_string(), f.frequency_ref.clone(), kind.to_string()];
        row.extend(f.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::spectral::{sample_gaussian_frequencies, FrequencySet};
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{ChiSquared, Distribution, StandardNormal};

    fn freqs1(ws: &[f64]) -> FrequencySet {
        FrequencySet::from_rows(ws.to_vec(), 1).unwrap()
    }

    #[test]
    fn single_point_fourier_features() {
        let bag = Bag::new(vec![0.3, -1.2], 2).unwrap();
        let f = FrequencySet::from_rows(vec![1.0, 2.0, -0.5, 0.25], 2).unwrap();
        let phi = fourier_features(&bag, &f).unwrap();
        let s = (0.5f64).sqrt();
        for j in 0..2 {
            let arg = f.omega(j)[0] * 0.3 + f.omega(j)[1] * -1.2;
            assert!((phi.values[2 * j] - arg.cos() * s).abs() < 1e-15);
            assert!((phi.values[2 * j + 1] - arg.sin() * s).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_bag_has_zero_sine() {
        let bag = Bag::new(vec![0.7, -0.7], 1).unwrap();
        let f = freqs1(&[0.3, 1.7, -4.0]);
        let phi = fourier_features(&bag, &f).unwrap();
        for j in 0..3 {
            assert_eq!(phi.values[2 * j + 1], 0.0);
        }
        let cf = empirical_charfn(&bag, &f).unwrap();
        assert!(cf.im.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn point_mass_at_origin_has_unit_charfn() {
        let bag = Bag::new(vec![0.0; 4], 2).unwrap();
        let f = sample_gaussian_frequencies(2, 6, 1.0, 3).unwrap();
        let cf = empirical_charfn(&bag, &f).unwrap();
        assert!(cf.re.iter().all(|v| *v == 1.0));
        assert!(cf.im.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gaussian_sample_matches_gaussian_charfn() {
        let mut rng = rng_from_seed(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();
        let bag = Bag::new(xs, 1).unwrap();
        let f = freqs1(&[1.0]);
        let phi = fourier_features(&bag, &f).unwrap();
        // m = 1, so the √(1/m) factor is 1.
        assert!((phi.values[0] - (-0.5f64).exp()).abs() < 0.005);
        assert!(phi.values[1].abs() < 0.005);

        let psi = phase_features(&bag, &f, DEFAULT_NORM_FLOOR).unwrap();
        assert!((psi.values[0] - 1.0).abs() < 1e-3);
        assert!(psi.values[1].abs() < 0.01);
    }

    #[test]
    fn scaled_chi_squared_phase_angle() {
        // φ(ω) of χ²(4)/4 is (1 − iω/2)^{-2}: phase angle 2·arctan(ω/2).
        let mut rng = rng_from_seed(2);
        let chi = ChiSquared::new(4.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| chi.sample(&mut rng) / 4.0).collect();
        let bag = Bag::new(xs, 1).unwrap();
        let psi = phase_features(&bag, &freqs1(&[1.0]), DEFAULT_NORM_FLOOR).unwrap();
        let theta = 2.0 * (0.5f64).atan();
        assert!((psi.values[0] - theta.cos()).abs() < 0.005);
        assert!((psi.values[1] - theta.sin()).abs() < 0.005);
    }

    #[test]
    fn scaled_chi_squared_charfn() {
        // χ²(8)/8 at ω = 2: (1 − iω/4)^{-4}.
        let mut rng = rng_from_seed(3);
        let chi = ChiSquared::new(8.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| chi.sample(&mut rng) / 8.0).collect();
        let bag = Bag::new(xs, 1).unwrap();
        let cf = empirical_charfn(&bag, &freqs1(&[2.0])).unwrap();
        // (1 − 0.5 i)^{-4} = ((1 + 0.5 i) / 1.25)^4
        let (mut re, mut im) = (1.0f64, 0.0f64);
        for _ in 0..4 {
            let (a, b) = (re * 1.0 - im * 0.5, re * 0.5 + im * 1.0);
            re = a / 1.25;
            im = b / 1.25;
        }
        assert!((cf.re[0] - re).abs() < 0.01, "{} vs {}", cf.re[0], re);
        assert!((cf.im[0] - im).abs() < 0.01, "{} vs {}", cf.im[0], im);
    }

    #[test]
    fn single_point_phase_is_already_unit() {
        let bag = Bag::new(vec![1.3], 1).unwrap();
        let f = freqs1(&[0.4, 2.2]);
        let phi = fourier_features(&bag, &f).unwrap();
        let psi = phase_features(&bag, &f, DEFAULT_NORM_FLOOR).unwrap();
        for (a, b) in phi.values.iter().zip(&psi.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn clamped_frequencies_are_reported() {
        // cos(π/2·(±1)) = 0 and the sines cancel: the pair is exactly (≈0, 0).
        let bag = Bag::new(vec![1.0, -1.0], 1).unwrap();
        let f = freqs1(&[std::f64::consts::FRAC_PI_2, 0.3]);
        let psi = phase_features(&bag, &f, 1e-12).unwrap();
        assert_eq!(psi.clamped, vec![0]);
        assert_eq!(psi.values.len(), 4);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let bag = Bag::new(vec![1.0, 2.0], 2).unwrap();
        let f = freqs1(&[1.0]);
        assert!(matches!(fourier_features(&bag, &f), Err(Error::DimensionMismatch { .. })));
        assert!(phase_features(&bag, &f, 1e-12).is_err());
        assert!(empirical_charfn(&bag, &f).is_err());
    }

    #[test]
    fn fourier_is_scaled_charfn_bitwise() {
        let mut rng = rng_from_seed(4);
        let xs: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let bag = Bag::new(xs, 2).unwrap();
        let f = sample_gaussian_frequencies(2, 9, 1.0, 1).unwrap();
        let cf = empirical_charfn(&bag, &f).unwrap();
        let phi = fourier_features(&bag, &f).unwrap();
        let s = (1.0 / 9.0f64).sqrt();
        for j in 0..9 {
            assert_eq!(phi.values[2 * j], cf.re[j] * s);
            assert_eq!(phi.values[2 * j + 1], cf.im[j] * s);
        }
    }

    #[test]
    fn chunked_sum_is_thread_count_independent() {
        let mut rng = rng_from_seed(5);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let bag = Bag::new(xs, 1).unwrap();
        let f = sample_gaussian_frequencies(1, 16, 1.0, 2).unwrap();
        let a = fourier_features(&bag, &f).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| fourier_features(&bag, &f).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn trig_cache_matches_direct_features() {
        let mut rng = rng_from_seed(6);
        let xs: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let bag = Bag::new(xs, 3).unwrap();
        let f = sample_gaussian_frequencies(3, 5, 1.0, 2).unwrap();
        let cache = TrigCache::new(&bag, &f).unwrap();
        let idx: Vec<usize> = (0..bag.len()).collect();
        let (mut re, mut im) = (vec![0.0; 5], vec![0.0; 5]);
        cache.means_into(&idx, &mut re, &mut im);
        let cf = empirical_charfn(&bag, &f).unwrap();
        for j in 0..5 {
            assert!((re[j] - cf.re[j]).abs() < 1e-14);
            assert!((im[j] - cf.im[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn features_csv_has_expected_header() {
        let bag = Bag::new(vec![0.0, 1.0], 1).unwrap();
        let f = freqs1(&[1.0, 2.0]);
        let phi = fourier_features(&bag, &f).unwrap();
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &[("b0", &phi)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bag_id,frequency_set,kind,f1,f2,f3,f4\n"));
        assert!(text.contains(&f.id()));
    }

    fn bag_strategy() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (1usize..4).prop_flat_map(|d| (prop::collection::vec(-5.0f64..5.0, d..(40 * d)), Just(d)))
            .prop_map(|(mut v, d)| {
                let n = v.len() / d;
                v.truncate(n * d);
                (v, d)
            })
    }

    proptest! {
        #[test]
        fn phase_features_have_unit_norm((pts, d) in bag_strategy(), seed in any::<u64>()) {
            let bag = Bag::new(pts, d).unwrap();
            let f = sample_gaussian_frequencies(d, 7, 1.0, seed).unwrap();
            let psi = phase_features(&bag, &f, DEFAULT_NORM_FLOOR).unwrap();
            prop_assume!(psi.clamped.is_empty());
            prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
            let target = (1.0 / 7.0f64).sqrt();
            for pair in psi.values.chunks(2) {
                prop_assert!(((pair[0] * pair[0] + pair[1] * pair[1]).sqrt() - target).abs() < 1e-12);
            }
        }

        #[test]
        fn translation_rotates_pairs((pts, d) in bag_strategy(), t in prop::collection::vec(-3.0f64..3.0, 3), seed in any::<u64>()) {
            let bag = Bag::new(pts, d).unwrap();
            let t = &t[..d];
            let f = sample_gaussian_frequencies(d, 5, 1.0, seed).unwrap();
            let a = empirical_charfn(&bag, &f).unwrap();
            let b = empirical_charfn(&bag.translated(t).unwrap(), &f).unwrap();
            for j in 0..5 {
                let ang: f64 = f.omega(j).iter().zip(t).map(|(w, s)| w * s).sum();
                let (s, c) = ang.sin_cos();
                let re = a.re[j] * c - a.im[j] * s;
                let im = a.re[j] * s + a.im[j] * c;
                prop_assert!((b.re[j] - re).abs() < 1e-12);
                prop_assert!((b.im[j] - im).abs() < 1e-12);
                prop_assert!((b.modulus[j] - a.modulus[j]).abs() < 1e-12);
            }
        }

        #[test]
        fn charfn_modulus_is_consistent((pts, d) in bag_strategy(), seed in any::<u64>()) {
            let bag = Bag::new(pts, d).unwrap();
            let f = sample_gaussian_frequencies(d, 4, 0.5, seed).unwrap();
            let cf = empirical_charfn(&bag, &f).unwrap();
            for j in 0..4 {
                prop_assert!(cf.modulus[j] <= 1.0 + 1e-12);
                prop_assert!((cf.re[j].powi(2) + cf.im[j].powi(2) - cf.modulus[j].powi(2)).abs() < 1e-12);
            }
        }
    }
}
