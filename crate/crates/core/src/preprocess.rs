//! Quantile-quantile transformation of well-log permeability and log10
//! conversions.
//!
//! Empirical distributions use plotting positions `(i - 0.5) / n` with linear
//! interpolation between order statistics. All quantile work happens on
//! log10 values; inputs and outputs are in mD.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::WellRecord;
use crate::error::{Error, Result};

pub fn to_log10(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| if v > 0.0 && v.is_finite() { Ok(v.log10()) } else { Err(Error::NonPositive(v)) })
        .collect()
}

pub fn from_log10(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| 10f64.powf(*v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QqMode {
    /// Map well-log values onto the well-test distribution.
    #[default]
    MatchWelltest,
    /// Map well-log values onto a normal distribution in log10 space with
    /// the sample's own mean and standard deviation.
    LogNormalize,
}

/// Sorted sample with plotting-position quantiles.
#[derive(Debug, Clone)]
struct Empirical {
    sorted: Vec<f64>,
}

impl Empirical {
    fn new(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        let distinct = values.windows(2).filter(|w| w[1] > w[0]).count() + usize::from(!values.is_empty());
        if distinct < 2 {
            return Err(Error::DegenerateSample(format!("{distinct} distinct value(s), need at least 2")));
        }
        Ok(Self { sorted: values })
    }

    fn n(&self) -> usize {
        self.sorted.len()
    }

    fn position(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.n() as f64
    }

    fn min(&self) -> f64 {
        self.sorted[0]
    }

    fn max(&self) -> f64 {
        self.sorted[self.n() - 1]
    }

    /// Plotting-position CDF, right-continuous across ties.
    fn cdf(&self, v: f64) -> f64 {
        let s = &self.sorted;
        if v < s[0] {
            return self.position(0);
        }
        let k = s.partition_point(|x| *x <= v) - 1;
        if k + 1 == s.len() {
            return self.position(k);
        }
        let t = (v - s[k]) / (s[k + 1] - s[k]);
        self.position(k) + t * (self.position(k + 1) - self.position(k))
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.n();
        let h = p * n as f64 - 0.5;
        if h <= 0.0 {
            return self.sorted[0];
        }
        let k = h.floor() as usize;
        if k + 1 >= n {
            return self.sorted[n - 1];
        }
        let t = h - k as f64;
        self.sorted[k] + t * (self.sorted[k + 1] - self.sorted[k])
    }
}

fn check_values(values: &[f64]) -> Result<Vec<f64>> {
    to_log10(values)
}

/// Maps each of `values` to the `target_sample` quantile found at its
/// empirical CDF in `source_sample`. Values at or beyond the source extremes
/// map to the target extremes.
pub fn qq_transform(source_sample: &[f64], target_sample: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let source = Empirical::new(to_log10(source_sample)?)?;
    let target = Empirical::new(to_log10(target_sample)?)?;
    let logs = check_values(values)?;
    let out: Vec<f64> = logs
        .iter()
        .map(|&v| {
            if v <= source.min() {
                target.min()
            } else if v >= source.max() {
                target.max()
            } else {
                target.quantile(source.cdf(v))
            }
        })
        .collect();
    Ok(from_log10(&out))
}

/// Maps values onto a log-normal distribution matching the sample's log10
/// mean and standard deviation.
pub fn log_normalize(source_sample: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let logs = to_log10(source_sample)?;
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let source = Empirical::new(logs)?;
    let normal = Normal::new(mean, sd).map_err(|e| Error::DegenerateSample(e.to_string()))?;
    let out: Vec<f64> = check_values(values)?.iter().map(|&v| normal.inverse_cdf(source.cdf(v))).collect();
    Ok(from_log10(&out))
}

/// Fills `k_wl_qq` for every well with a well-log value.
pub fn transform_wells(wells: &mut [WellRecord], mode: QqMode) -> Result<()> {
    let wl: Vec<f64> = wells.iter().filter_map(|w| w.k_wl).collect();
    let transformed = match mode {
        QqMode::MatchWelltest => {
            let wt: Vec<f64> = wells.iter().filter_map(|w| w.fusion_wt()).collect();
            qq_transform(&wl, &wt, &wl)?
        }
        QqMode::LogNormalize => log_normalize(&wl, &wl)?,
    };
    let mut it = transformed.into_iter();
    for w in wells.iter_mut().filter(|w| w.k_wl.is_some()) {
        w.k_wl_qq = it.next();
    }
    Ok(())
}

/// Two-sample Kolmogorov-Smirnov distance between empirical step CDFs.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
