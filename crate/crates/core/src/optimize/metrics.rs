use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub r2: f64,
}

fn check_lengths(k: &[f64], k_hat: &[f64]) -> Result<()> {
    if k.len() != k_hat.len() {
        return Err(Error::LengthMismatch(k.len(), k_hat.len()));
    }
    if k.is_empty() {
        return Err(Error::LengthMismatch(0, 0));
    }
    Ok(())
}

/// Coefficient of determination with `k` as the reference.
pub fn r_squared(k: &[f64], k_hat: &[f64]) -> Result<f64> {
    check_lengths(k, k_hat)?;
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    let ss_tot: f64 = k.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = k.iter().zip(k_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn metrics(k: &[f64], k_hat: &[f64]) -> Result<Metrics> {
    check_lengths(k, k_hat)?;
    let mse = k.iter().zip(k_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / k.len() as f64;
    Ok(Metrics { mse, r2: r_squared(k, k_hat)? })
}

/// Distribution mismatch in `[0, 1]`: normalized histograms over shared
/// equal-width bins, `sqrt(sum |p - p_hat|) / sqrt(2)`.
pub fn hist_distance_l1(k: &[f64], k_hat: &[f64], bins: usize) -> f64 {
    let bins = bins.max(1);
    let (lo, hi) = k
        .iter()
        .chain(k_hat)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let histogram = |vals: &[f64]| {
        let mut h = vec![0.0; bins];
        for &v in vals {
            let b = if hi > lo { (((v - lo) / (hi - lo)) * bins as f64) as usize } else { 0 };
            h[b.min(bins - 1)] += 1.0;
        }
        let n = vals.len() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    };
    let (p, q) = (histogram(k), histogram(k_hat));
    let total: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
    (total.sqrt() / 2f64.sqrt()).min(1.0)
}

/// Range mismatch `|range(k) - range(k_hat)|` normalized by the largest
/// magnitude in either list.
pub fn range_penalty_l2(k: &[f64], k_hat: &[f64]) -> Result<f64> {
    if k.is_empty() || k_hat.is_empty() {
        return Err(Error::LengthMismatch(k.len(), k_hat.len()));
    }
    let range = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        hi - lo
    };
    let scale = k.iter().chain(k_hat).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::DegenerateNormalization);
    }
    Ok((range(k) - range(k_hat)).abs() / scale)
}
