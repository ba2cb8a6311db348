//! Synthetic data and CSV ingestion.
//!
//! Generators are pure functions of their configuration and seed. Bags are
//! generated in parallel, each from its own derived seed.
//!
//! Bag CSV layout: header `bag_id,group_id,y,x1,...,xd`. The `group_id` column
//! may be omitted entirely or left empty per row; an empty `y` means unlabeled.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng as _;
use rand_distr::{ChiSquared, Gamma, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Bag;
use crate::rng::{derive_seed, rng_from_seed, stream, Rng};

/// Two-sample χ² data with additive Gaussian noise.
///
/// Each coordinate of `X₀` is `χ²(dof_x)/dof_x` (mean 1, variance `2/dof_x`),
/// likewise for `Y₀`. The noise-to-signal ratios `n1`, `n2` set the noise
/// variances to `n1·2/dof_x` and `n2·2/dof_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisyChiSqConfig {
    pub d: usize,
    pub dof_x: f64,
    pub dof_y: f64,
    pub n1: f64,
    pub n2: f64,
    /// Points per sample.
    pub n: usize,
}

impl Default for NoisyChiSqConfig {
    fn default() -> Self {
        NoisyChiSqConfig {
            d: 5,
            dof_x: 4.0,
            dof_y: 8.0,
            n1: 0.0,
            n2: 0.0,
            n: 1000,
        }
    }
}

impl NoisyChiSqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::invalid("d and n must be at least 1"));
        }
        if !(self.dof_x > 0.0 && self.dof_y > 0.0) {
            return Err(Error::invalid("degrees of freedom must be positive"));
        }
        if !(self.n1 >= 0.0 && self.n2 >= 0.0) {
            return Err(Error::invalid("noise-to-signal ratios must be nonnegative"));
        }
        Ok(())
    }

    pub fn noise_variance_x(&self) -> f64 {
        self.n1 * 2.0 / self.dof_x
    }

    pub fn noise_variance_y(&self) -> f64 {
        self.n2 * 2.0 / self.dof_y
    }
}

fn noisy_chisq(n: usize, d: usize, dof: f64, noise_var: f64, rng: &mut Rng) -> Result<Bag> {
    let chi = ChiSquared::new(dof).map_err(|e| Error::invalid(e.to_string()))?;
    let sd = noise_var.sqrt();
    let pts = (0..n * d)
        .map(|_| {
            let v: f64 = rng.sample(chi);
            let e: f64 = if sd > 0.0 { rng.sample::<f64, _>(StandardNormal) * sd } else { 0.0 };
            v / dof + e
        })
        .collect();
    Bag::new(pts, d)
}

pub fn gen_noisy_chisq_pair(config: &NoisyChiSqConfig, seed: u64) -> Result<(Bag, Bag)> {
    config.validate()?;
    let base = derive_seed(seed, stream::DATA);
    let mut rx = rng_from_seed(derive_seed(base, 0));
    let mut ry = rng_from_seed(derive_seed(base, 1));
    let x = noisy_chisq(config.n, config.d, config.dof_x, config.noise_variance_x(), &mut rx)?;
    let y = noisy_chisq(config.n, config.d, config.dof_y, config.noise_variance_y(), &mut ry)?;
    Ok((x, y))
}

fn rademacher(rng: &mut Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Density `x² e^{−x²/2}/√(2π)`: random sign times a chi variable with 3 degrees of freedom.
pub fn sample_same_phase_x(n: usize, seed: u64) -> Result<Bag> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA));
    let pts = (0..n)
        .map(|_| {
            let r = (0..3)
                .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                .sum::<f64>()
                .sqrt();
            rademacher(&mut rng) * r
        })
        .collect();
    Bag::new(pts, 1)
}

/// Density `|x| e^{−|x|}/2`: random sign times `Gamma(2, 1)`.
pub fn sample_same_phase_y(n: usize, seed: u64) -> Result<Bag> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream::DATA));
    let g = Gamma::new(2.0, 1.0).expect("valid gamma");
    let pts = (0..n)
        .map(|_| {
            let v: f64 = rng.sample(g);
            rademacher(&mut rng) * v
        })
        .collect();
    Bag::new(pts, 1)
}

/// Labeled bags for distribution regression.
///
/// Label `y ~ U[0, 1]`; each coordinate is `Gamma(k, 1)/√k` with shape
/// `k = 10 − 9y`, so the mean `√k` and the skewness `2/√k` both move with `y`
/// while the variance stays 1. Gaussian noise of standard deviation
/// `noise_sigma` is added to every coordinate.
pub fn gen_regression_bags(n_bags: usize, bag_size: usize, d: usize, noise_sigma: f64, seed: u64) -> Result<Vec<Bag>> {
    if n_bags < 2 || bag_size == 0 || d == 0 {
        return Err(Error::invalid("need n_bags ≥ 2, bag_size ≥ 1, d ≥ 1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid("noise_sigma must be nonnegative"));
    }
    let base = derive_seed(seed, stream::DATA);
    (0..n_bags)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(base, b as u64));
            let y: f64 = rng.random();
            let k = 10.0 - 9.0 * y;
            let g = Gamma::new(k, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
            let sk = k.sqrt();
            let pts = (0..bag_size * d)
                .map(|_| {
                    let v: f64 = rng.sample(g);
                    let e: f64 = rng.sample(StandardNormal);
                    v / sk + noise_sigma * e
                })
                .collect();
            Ok(Bag::new(pts, d)?.with_label(y).with_id(format!("bag{b}")))
        })
        .collect()
}

/// Adds diagonal Gaussian noise `N(0, Z)` to every point, with each variance
/// `z_k ~ U[0, max_variance[k]]` drawn once for the whole bag.
pub fn add_uniform_variance_noise(bag: &Bag, max_variance: &[f64], rng: &mut Rng) -> Result<Bag> {
    bag.check_dim(max_variance.len())?;
    if max_variance.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("noise variances must be nonnegative and finite"));
    }
    let z: Vec<f64> = max_variance
        .iter()
        .map(|&v| if v > 0.0 { rng.sample(Uniform::new(0.0, v).expect("valid range")) } else { 0.0 })
        .collect();
    add_diagonal_noise(bag, &z, rng)
}

/// Adds `N(0, diag(variances))` to every point.
pub fn add_diagonal_noise(bag: &Bag, variances: &[f64], rng: &mut Rng) -> Result<Bag> {
    bag.check_dim(variances.len())?;
    let sds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let mut out = bag.clone();
    if sds.iter().all(|s| *s == 0.0) {
        return Ok(out);
    }
    let d = bag.dim();
    for (k, v) in out.points_mut().iter_mut().enumerate() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sds[k % d] * e;
    }
    Ok(out)
}

fn parse_cell(cell: &str, row: usize, what: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::parse(row, format!("non-numeric {what} '{cell}'")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(row, format!("non-finite {what} '{cell}'")))
    }
}

/// Reads bags from CSV. Rows sharing a `bag_id` form one bag, in order of first
/// appearance. Row numbers in errors count the header as row 1.
pub fn load_bags_csv<R: Read>(reader: R) -> Result<Vec<Bag>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("bag_id") {
        return Err(Error::parse(1, "header must start with bag_id"));
    }
    let has_group = header.get(1).map(String::as_str) == Some("group_id");
    let y_col = if has_group { 2 } else { 1 };
    if header.get(y_col).map(String::as_str) != Some("y") {
        return Err(Error::parse(1, "expected a y column after bag_id[,group_id]"));
    }
    let d = header.len() - y_col - 1;
    if d == 0 {
        return Err(Error::parse(1, "no feature columns"));
    }
    for (k, h) in header[y_col + 1..].iter().enumerate() {
        if *h != format!("x{}", k + 1) {
            return Err(Error::parse(1, format!("expected column x{}, found '{h}'", k + 1)));
        }
    }

    struct Pending {
        id: String,
        group: Option<String>,
        label: Option<f64>,
        points: Vec<f64>,
    }
    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| Error::parse(row, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::parse(row, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let id = rec[0].trim();
        if id.is_empty() {
            return Err(Error::parse(row, "missing bag_id"));
        }
        let group = if has_group { Some(rec[1].trim()).filter(|g| !g.is_empty()).map(str::to_string) } else { None };
        let label = match rec[y_col].trim() {
            "" => None,
            s => Some(parse_cell(s, row, "label")?),
        };
        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            order.push(Pending {
                id: id.to_string(),
                group: group.clone(),
                label,
                points: Vec::new(),
            });
            order.len() - 1
        });
        let bag = &mut order[slot];
        if bag.label.map(f64::to_bits) != label.map(f64::to_bits) {
            return Err(Error::parse(row, format!("inconsistent label within bag '{id}'")));
        }
        if bag.group != group {
            return Err(Error::parse(row, format!("inconsistent group_id within bag '{id}'")));
        }
        for k in 0..d {
            bag.points.push(parse_cell(&rec[y_col + 1 + k], row, "value")?);
        }
    }
    order
        .into_iter()
        .map(|p| {
            let mut bag = Bag::new(p.points, d)?.with_id(p.id);
            bag.label = p.label;
            bag.group = p.group;
            Ok(bag)
        })
        .collect()
}

/// Writes bags in the layout read by [`load_bags_csv`], always with a `group_id` column.
pub fn save_bags_csv<W: Write>(writer: W, bags: &[Bag]) -> Result<()> {
    let d = match bags.first() {
        Some(b) => b.dim(),
        None => return Err(Error::invalid("no bags to write")),
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["bag_id".to_string(), "group_id".into(), "y".into()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for bag in bags {
        bag.check_dim(d)?;
        if bag.id.is_empty() {
            return Err(Error::invalid("bags written to CSV need an id"));
        }
        let label = bag.label.map(|v| v.to_string()).unwrap_or_default();
        let group = bag.group.clone().unwrap_or_default();
        for i in 0..bag.len() {
            let mut rec = vec![bag.id.clone(), group.clone(), label.clone()];
            rec.extend(bag.point(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads one sample: rows of `d` numbers, with an optional header row of column names.
pub fn load_sample_csv<R: Read>(reader: R) -> Result<Bag> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut d = None;
    let mut pts = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::parse(row, e.to_string()))?;
        if row == 1 && rec.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            if rec.iter().any(|c| c.trim().is_empty()) {
                return Err(Error::parse(row, "empty column name in header"));
            }
            d = Some(rec.len());
            continue;
        }
        let width = *d.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(Error::parse(row, format!("expected {width} fields, found {}", rec.len())));
        }
        for cell in rec.iter() {
            pts.push(parse_cell(cell, row, "value")?);
        }
    }
    match d {
        Some(d) if !pts.is_empty() => Bag::new(pts, d),
        _ => Err(Error::parse(1, "no data rows")),
    }
}

pub fn save_sample_csv<W: Write>(writer: W, bag: &Bag) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=bag.dim()).map(|k| format!("x{k}")))?;
    for i in 0..bag.len() {
        w.write_record(bag.point(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
