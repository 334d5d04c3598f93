//! Histograms and a two-component Gaussian mixture used to call bimodality.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_BINS: usize = 100;
/// Auto-ranged histograms extend the data range by this fraction on each side.
pub const RANGE_PAD: f64 = 0.05;
/// Ashman separation above which two fitted components count as distinct modes.
pub const ASHMAN_THRESHOLD: f64 = 2.0;
/// Smallest weight either component needs for a bimodal call.
pub const MIN_COMPONENT_WEIGHT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Counts `values` into `bins` equal bins over `range`, or over the padded data
    /// range when `range` is `None`. Values outside an explicit range are clamped
    /// into the end bins so that the total always equals the sample size.
    pub fn new(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidConfig("histogram needs at least 2 bins".into()));
        }
        let (lo, hi) = match range {
            Some((lo, hi)) if hi > lo => (lo, hi),
            Some(_) => return Err(Error::InvalidConfig("histogram range must be increasing".into())),
            None => auto_range(values),
        };
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let k = ((v - lo) / width).floor();
            let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
            counts[k] += 1;
        }
        Ok(Histogram { lo, hi, counts })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + k as f64 * w, self.lo + (k + 1) as f64 * w)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

fn auto_range(values: &[f64]) -> (f64, f64) {
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !min.is_finite() {
        return (-0.5, 0.5);
    }
    let pad = RANGE_PAD * (max - min);
    let pad = if pad > 0.0 { pad } else { 0.5 * min.abs().max(1e-9) };
    (min - pad, max + pad)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub sds: [f64; 2],
    pub log_likelihood: f64,
}

impl MixtureFit {
    /// Separation of the two components in units of their pooled spread.
    pub fn ashman_d(&self) -> f64 {
        let gap = (self.means[0] - self.means[1]).abs();
        let pooled = (self.sds[0].powi(2) + self.sds[1].powi(2)).sqrt();
        if pooled == 0.0 {
            return if gap == 0.0 { 0.0 } else { f64::INFINITY };
        }
        std::f64::consts::SQRT_2 * gap / pooled
    }

    pub fn density(&self, x: f64) -> f64 {
        (0..2).map(|k| self.weights[k] * normal_density(x, self.means[k], self.sds[k].powi(2))).sum()
    }

    /// Local maxima of the fitted density, found on a fine grid spanning both components.
    pub fn mode_count(&self) -> usize {
        if self.sds.iter().any(|&s| !(s > 0.0)) {
            return 1;
        }
        let lo = self.means[0] - 4.0 * self.sds[0];
        let hi = self.means[1] + 4.0 * self.sds[1];
        let n = 2000;
        let f: Vec<f64> = (0..=n).map(|i| self.density(lo + (hi - lo) * i as f64 / n as f64)).collect();
        f.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).count()
    }

    /// Two well separated components, neither negligible, whose mixture density
    /// actually dips between them.
    pub fn is_bimodal(&self) -> bool {
        self.ashman_d() > ASHMAN_THRESHOLD
            && self.weights.iter().all(|&w| w > MIN_COMPONENT_WEIGHT)
            && self.mode_count() >= 2
    }
}

/// Maximum-likelihood two-component Gaussian mixture by expectation maximization,
/// started from the lower and upper quartiles.
pub fn fit_two_gaussians(values: &[f64]) -> Result<MixtureFit> {
    if values.len() < 4 {
        return Err(Error::InvalidConfig("mixture fit needs at least 4 values".into()));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    // Variance floor keeps a component from collapsing onto repeated values.
    let floor = (1e-6 * var).max(1e-24);
    if var <= 1e-24 {
        return Ok(MixtureFit { weights: [0.5, 0.5], means: [mean, mean], sds: [0.0, 0.0], log_likelihood: 0.0 });
    }

    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    let mut w = [0.5, 0.5];
    let mut mu = [q(0.25), q(0.75)];
    let mut s2 = [var.max(floor), var.max(floor)];
    let mut resp = vec![0.0; values.len()];
    let mut ll_old = f64::NEG_INFINITY;
    let mut ll = ll_old;
    for _ in 0..500 {
        ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let l0 = w[0] * normal_density(x, mu[0], s2[0]);
            let l1 = w[1] * normal_density(x, mu[1], s2[1]);
            let tot = l0 + l1;
            *r = if tot > 0.0 { l0 / tot } else { 0.5 };
            ll += tot.max(f64::MIN_POSITIVE).ln();
        }
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        if n0 < 1e-9 || n1 < 1e-9 {
            break;
        }
        w = [n0 / n, n1 / n];
        mu = [
            resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / n0,
            resp.iter().zip(values).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n1,
        ];
        s2 = [
            (resp.iter().zip(values).map(|(r, x)| r * (x - mu[0]).powi(2)).sum::<f64>() / n0).max(floor),
            (resp.iter().zip(values).map(|(r, x)| (1.0 - r) * (x - mu[1]).powi(2)).sum::<f64>() / n1).max(floor),
        ];
        if (ll - ll_old).abs() <= 1e-10 * ll.abs().max(1.0) {
            break;
        }
        ll_old = ll;
    }
    let (a, b) = if mu[0] <= mu[1] { (0, 1) } else { (1, 0) };
    Ok(MixtureFit {
        weights: [w[a], w[b]],
        means: [mu[a], mu[b]],
        sds: [s2[a].sqrt(), s2[b].sqrt()],
        log_likelihood: ll,
    })
}

fn normal_density(x: f64, mu: f64, s2: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt()
}
