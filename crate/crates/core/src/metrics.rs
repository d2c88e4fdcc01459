//! Coordination measures on pairs of behavior series.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_float;

/// Sample Pearson correlation.
///
/// Each series is rescaled by its largest magnitude first, so trajectories that
/// grow to ~1e160 still give a finite coefficient. Constant or non-finite
/// series yield [`Error::UndefinedCorrelation`].
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let (Some(sx), Some(sy)) = (scale_of(x), scale_of(y)) else {
        return Err(Error::UndefinedCorrelation);
    };
    let n = x.len() as f64;
    let mx = x.iter().map(|v| v / sx).sum::<f64>() / n;
    let my = y.iter().map(|v| v / sy).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a / sx - mx;
        let dy = b / sy - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Largest magnitude, or `None` for constant / non-finite series.
fn scale_of(v: &[f64]) -> Option<f64> {
    let first = v[0];
    let mut scale = 0.0f64;
    let mut varies = false;
    for &a in v {
        if !a.is_finite() {
            return None;
        }
        varies |= a != first;
        scale = scale.max(a.abs());
    }
    (varies && scale > 0.0).then_some(scale)
}

/// Lagged cross-correlation. Positive lag `k` pairs `x[t]` with `y[t + k]`,
/// i.e. Person 2 lags Person 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcfResult {
    pub max_lag: usize,
    /// Indexed by `lag + max_lag`; `None` where an overlap segment is constant.
    pub values: Vec<Option<f64>>,
}

impl CcfResult {
    pub fn value(&self, lag: i64) -> Option<f64> {
        let idx = lag + self.max_lag as i64;
        if idx < 0 {
            return None;
        }
        self.values.get(idx as usize).copied().flatten()
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let m = self.max_lag as i64;
        -m..=m
    }
}

pub fn cross_correlation(x: &[f64], y: &[f64], max_lag: usize) -> Result<CcfResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be at least 1".into()));
    }
    let n = x.len();
    if n <= 2 * max_lag + 2 {
        return Err(Error::TooShort {
            needed: 2 * max_lag + 3,
            got: n,
        });
    }
    let m = max_lag as i64;
    let values = (-m..=m)
        .map(|k| {
            let (xs, ys) = if k >= 0 {
                let k = k as usize;
                (&x[..n - k], &y[k..])
            } else {
                let k = (-k) as usize;
                (&x[k..], &y[..n - k])
            };
            pearson_r(xs, ys).ok()
        })
        .collect();
    Ok(CcfResult { max_lag, values })
}

/// Per-lag mean and sample SD over many CCFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcfSummary {
    pub max_lag: usize,
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
    pub n_defined: Vec<usize>,
    pub n_undefined: Vec<usize>,
}

impl CcfSummary {
    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let m = self.max_lag as i64;
        -m..=m
    }

    pub fn mean_at(&self, lag: i64) -> Option<f64> {
        let idx = lag + self.max_lag as i64;
        usize::try_from(idx)
            .ok()
            .and_then(|i| self.mean.get(i).copied().flatten())
    }

    /// Lag with the largest |mean|; ties go to the smaller |lag|.
    pub fn peak_lag(&self) -> Option<i64> {
        let mut best: Option<(i64, f64)> = None;
        for lag in self.lags() {
            if let Some(v) = self.mean_at(lag) {
                let better = match best {
                    None => true,
                    Some((bl, bv)) => {
                        v.abs() > bv.abs() || (v.abs() == bv.abs() && lag.abs() < bl.abs())
                    }
                };
                if better {
                    best = Some((lag, v));
                }
            }
        }
        best.map(|(l, _)| l)
    }

    /// `lag,mean,sd,n_defined`; undefined cells are written as `NaN`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lag", "mean", "sd", "n_defined"])?;
        for (i, lag) in self.lags().enumerate() {
            out.write_record([
                lag.to_string(),
                fmt_float(self.mean[i].unwrap_or(f64::NAN)),
                fmt_float(self.sd[i].unwrap_or(f64::NAN)),
                self.n_defined[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn aggregate_ccf(results: &[CcfResult]) -> Result<CcfSummary> {
    let first = results
        .first()
        .ok_or(Error::Empty("no CCF results to aggregate"))?;
    let max_lag = first.max_lag;
    if let Some(bad) = results.iter().find(|r| r.max_lag != max_lag) {
        return Err(Error::InvalidParameter(format!(
            "mixed max_lag values {} and {}",
            max_lag, bad.max_lag
        )));
    }
    let width = 2 * max_lag + 1;
    let mut summary = CcfSummary {
        max_lag,
        mean: Vec::with_capacity(width),
        sd: Vec::with_capacity(width),
        n_defined: Vec::with_capacity(width),
        n_undefined: Vec::with_capacity(width),
    };
    for i in 0..width {
        let vals: Vec<f64> = results.iter().filter_map(|r| r.values[i]).collect();
        let n = vals.len();
        let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
        let sd = match mean {
            Some(m) if n >= 2 => {
                let ss: f64 = vals.iter().map(|v| (v - m).powi(2)).sum();
                Some((ss / (n - 1) as f64).sqrt())
            }
            _ => None,
        };
        summary.mean.push(mean);
        summary.sd.push(sd);
        summary.n_defined.push(n);
        summary.n_undefined.push(results.len() - n);
    }
    Ok(summary)
}

/// Turn-taking lag settings. The on-state threshold is always the series mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    pub max_lag: usize,
}

impl Default for LagSpec {
    fn default() -> Self {
        Self { max_lag: 20 }
    }
}

impl LagSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_lag == 0 {
            return Err(Error::InvalidParameter("max_lag must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagDistribution {
    pub max_lag: usize,
    /// Indexed by `lag + max_lag`.
    pub counts: Vec<u64>,
    pub total_events: u64,
}

impl LagDistribution {
    pub fn empty(max_lag: usize) -> Self {
        Self {
            max_lag,
            counts: vec![0; 2 * max_lag + 1],
            total_events: 0,
        }
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let m = self.max_lag as i64;
        -m..=m
    }

    pub fn count(&self, lag: i64) -> u64 {
        usize::try_from(lag + self.max_lag as i64)
            .ok()
            .and_then(|i| self.counts.get(i).copied())
            .unwrap_or(0)
    }

    pub fn rel_freq(&self, lag: i64) -> f64 {
        if self.total_events == 0 {
            0.0
        } else {
            self.count(lag) as f64 / self.total_events as f64
        }
    }

    /// Most frequent lag; ties go to the smaller |lag|, then the positive one.
    pub fn mode(&self) -> Option<i64> {
        if self.total_events == 0 {
            return None;
        }
        self.lags().max_by(|&a, &b| {
            self.count(a)
                .cmp(&self.count(b))
                .then(b.abs().cmp(&a.abs()))
                .then(a.cmp(&b))
        })
    }
}

/// Signed distance from each on-sample of `x` to the nearest on-sample of `y`.
///
/// A sample is on when strictly above its own series' mean. Every on-sample of
/// `x` is an event; events farther than `max_lag` (or with no on-sample in `y`)
/// are discarded. Equidistant candidates resolve to the positive lag.
pub fn turn_lags(x: &[f64], y: &[f64], spec: &LagSpec) -> Result<LagDistribution> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let mut dist = LagDistribution::empty(spec.max_lag);
    let x_on = on_indices(x);
    let y_on = on_indices(y);
    if y_on.is_empty() {
        return Ok(dist);
    }
    let max_lag = spec.max_lag as i64;
    for t in x_on {
        // First on-sample of y at or after t.
        let pos = y_on.partition_point(|&u| u < t);
        let after = y_on.get(pos).map(|&u| u as i64 - t as i64);
        let before = pos.checked_sub(1).map(|p| y_on[p] as i64 - t as i64);
        let lag = match (before, after) {
            (Some(b), Some(a)) => {
                if -b < a {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("y_on is non-empty"),
        };
        if lag.abs() <= max_lag {
            dist.counts[(lag + max_lag) as usize] += 1;
            dist.total_events += 1;
        }
    }
    Ok(dist)
}

fn on_indices(v: &[f64]) -> Vec<usize> {
    if v.is_empty() {
        return Vec::new();
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter()
        .enumerate()
        .filter(|(_, &a)| a > mean)
        .map(|(i, _)| i)
        .collect()
}

/// Uniform-width histogram; bins are `[lo, hi)` except the last, which is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Values outside `[lo, hi]` (and NaN).
    pub overflow: u64,
}

impl Histogram {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        let lo = self.lo + i as f64 * w;
        let hi = if i + 1 == self.counts.len() {
            self.hi
        } else {
            self.lo + (i + 1) as f64 * w
        };
        (lo, hi)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `bin_lo,bin_hi,count`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bin_edges(i);
            out.write_record([fmt_float(lo), fmt_float(hi), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn histogram(values: &[f64], bin_count: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(Error::InvalidParameter(
            "bin_count must be at least 1".into(),
        ));
    }
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidParameter(format!(
            "histogram range [{lo}, {hi}] is empty or non-finite"
        )));
    }
    let mut h = Histogram {
        lo,
        hi,
        counts: vec![0; bin_count],
        overflow: 0,
    };
    let scale = bin_count as f64 / (hi - lo);
    for &v in values {
        if !(lo..=hi).contains(&v) {
            h.overflow += 1;
            continue;
        }
        let idx = (((v - lo) * scale).floor() as usize).min(bin_count - 1);
        h.counts[idx] += 1;
    }
    Ok(h)
}
