//! Fluctuation detrending moving-average analysis (backward moving average)
//! and the sliding-window local Hurst exponent.
//!
//! For a window of `N` returns the estimator builds the cumulative profile,
//! subtracts its backward moving average of size `n`, splits the residuals
//! into disjoint length-`n` segments and regresses `ln F(n)` on `ln n` over
//! a fixed grid of segment sizes. The slope is the Hurst exponent.

mod fgn;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::marketdata::ReturnSeries;

pub use fgn::{fgn_autocovariance, generate_fgn};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HurstError {
    #[error("invalid FDMAA configuration: {0}")]
    InvalidConfig(String),
    #[error("segment size {n} exceeds series length {len}")]
    Size { n: usize, len: usize },
    #[error("series of length {len} is shorter than the window {window}")]
    TooShort { len: usize, window: usize },
    #[error("only {0} usable (n, F) points; at least 3 are required")]
    TooFewPoints(usize),
    #[error("circulant embedding failed for H = {0}, length {1}")]
    Embedding(f64, usize),
}

/// How many disjoint segments the residual series is split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRule {
    /// `floor(N / (n - 1))`, capped by the residual length.
    #[default]
    NMinusOne,
    /// `floor(N / n)`, capped by the residual length.
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdmaaConfig {
    pub window: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub phi: usize,
    /// Moving-average position; only the backward average (0) is supported.
    pub position: u32,
    pub segment_rule: SegmentRule,
}

impl Default for FdmaaConfig {
    fn default() -> Self {
        Self {
            window: 215,
            n_min: 5,
            n_max: 43,
            phi: 30,
            position: 0,
            segment_rule: SegmentRule::NMinusOne,
        }
    }
}

impl FdmaaConfig {
    pub fn validate(&self) -> Result<(), HurstError> {
        let bad = |m: String| Err(HurstError::InvalidConfig(m));
        if self.n_min < 2 {
            return bad(format!("n_min = {} must be at least 2", self.n_min));
        }
        if self.n_min >= self.n_max {
            return bad(format!(
                "n_min = {} must be below n_max = {}",
                self.n_min, self.n_max
            ));
        }
        if self.n_max >= self.window {
            return bad(format!(
                "n_max = {} must be below window = {}",
                self.n_max, self.window
            ));
        }
        if self.phi < 3 {
            return bad(format!("phi = {} must be at least 3", self.phi));
        }
        if self.phi > self.n_max - self.n_min + 1 {
            return bad(format!(
                "phi = {} exceeds the {} integers in [{}, {}]",
                self.phi,
                self.n_max - self.n_min + 1,
                self.n_min,
                self.n_max
            ));
        }
        if self.position != 0 {
            return bad(format!(
                "position = {} unsupported; only 0 (backward)",
                self.position
            ));
        }
        Ok(())
    }

    /// `phi` distinct ascending segment sizes from `n_min` to `n_max`,
    /// following an even spacing on the log scale.
    ///
    /// Each size is the rounded log-spaced target, pushed up to stay above
    /// its predecessor and down to leave room for the remaining sizes.
    pub fn scale_grid(&self) -> Vec<usize> {
        let span = (self.n_max as f64 / self.n_min as f64).ln();
        let mut grid: Vec<usize> = Vec::with_capacity(self.phi);
        for k in 0..self.phi {
            let target = self.n_min as f64 * (span * k as f64 / (self.phi - 1) as f64).exp();
            let lo = grid.last().map_or(self.n_min, |&p| p + 1);
            let hi = self.n_max - (self.phi - 1 - k);
            grid.push((target.round() as usize).clamp(lo, hi));
        }
        grid
    }
}

/// Running sum `y(d) = r(1) + ... + r(d)`.
pub fn cumulative_profile(r: &[f64]) -> Vec<f64> {
    r.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Backward moving average `(1/n) * sum_{k<n} y(d - k)` for `d = n..=N`
/// (1-based), so the result has `N - n + 1` entries.
pub fn backward_moving_average(y: &[f64], n: usize) -> Result<Vec<f64>, HurstError> {
    if n == 0 || n > y.len() {
        return Err(HurstError::Size { n, len: y.len() });
    }
    let inv = 1.0 / n as f64;
    let mut sum: f64 = y[..n].iter().sum();
    let mut out = Vec::with_capacity(y.len() - n + 1);
    out.push(sum * inv);
    for d in n..y.len() {
        sum += y[d] - y[d - n];
        out.push(sum * inv);
    }
    Ok(out)
}

/// `eps(i) = y(i) - ma(i)` for `n <= i <= N`.
pub fn detrended_residual(y: &[f64], n: usize) -> Result<Vec<f64>, HurstError> {
    let ma = backward_moving_average(y, n)?;
    Ok(y[n - 1..].iter().zip(&ma).map(|(a, b)| a - b).collect())
}

/// Number of segments of size `n` for a window of length `window` whose
/// residual series has `residual_len` entries.
pub fn segment_count(window: usize, residual_len: usize, n: usize, rule: SegmentRule) -> usize {
    let nominal = match rule {
        SegmentRule::NMinusOne if n > 1 => window / (n - 1),
        SegmentRule::NMinusOne => window,
        SegmentRule::N => window / n,
    };
    nominal.min(residual_len / n)
}

/// Root mean square fluctuation over disjoint segments of size `n`, starting
/// at the first residual and discarding the tail remainder.
pub fn segment_rms(eps: &[f64], n: usize, rule: SegmentRule) -> Result<f64, HurstError> {
    if n == 0 || n > eps.len() {
        return Err(HurstError::Size { n, len: eps.len() });
    }
    let window = eps.len() + n - 1;
    let segments = segment_count(window, eps.len(), n, rule);
    let total: f64 = eps
        .chunks_exact(n)
        .take(segments)
        .map(|seg| seg.iter().map(|e| e * e).sum::<f64>() / n as f64)
        .sum();
    Ok((total / segments as f64).sqrt())
}

/// Result of the log-log regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstFit {
    pub h: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares slope of `ln F` on `ln n`. Points with `F <= 0` or
/// non-finite `F` are dropped.
pub fn fit_hurst(sizes: &[usize], fluct: &[f64]) -> Result<HurstFit, HurstError> {
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(fluct)
        .filter(|(_, &f)| f > 0.0 && f.is_finite())
        .map(|(&n, &f)| ((n as f64).ln(), f.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(HurstError::TooFewPoints(pts.len()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let h = sxy / sxx;
    let intercept = my - h * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - h * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(HurstFit {
        h,
        intercept,
        r2,
        points: pts.len(),
    })
}

/// `F(n)` over `grid` for one window of returns.
pub fn fluctuation_function(
    r: &[f64],
    grid: &[usize],
    rule: SegmentRule,
) -> Result<Vec<f64>, HurstError> {
    let y = cumulative_profile(r);
    grid.iter()
        .map(|&n| {
            let eps = detrended_residual(&y, n)?;
            segment_rms(&eps, n, rule)
        })
        .collect()
}

/// FDMAA exponent of a whole series treated as a single window.
pub fn fdmaa(r: &[f64], cfg: &FdmaaConfig) -> Result<HurstFit, HurstError> {
    let mut single = *cfg;
    single.window = r.len();
    single.validate()?;
    let grid = cfg.scale_grid();
    let f = fluctuation_function(r, &grid, cfg.segment_rule)?;
    fit_hurst(&grid, &f)
}

/// Local Hurst exponents, one per window end date.
#[derive(Debug, Clone, PartialEq)]
pub struct HurstSeries {
    pub dates: Vec<NaiveDate>,
    /// `None` where the window's regression failed.
    pub h: Vec<Option<f64>>,
    pub r2: Vec<Option<f64>>,
}

impl HurstSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Estimates outside the open unit interval (kept, but flagged).
    pub fn out_of_range(&self) -> usize {
        self.h
            .iter()
            .flatten()
            .filter(|&&h| !(h > 0.0 && h < 1.0))
            .count()
    }

    pub fn defined(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates
            .iter()
            .zip(&self.h)
            .filter_map(|(d, h)| h.map(|h| (*d, h)))
    }
}

/// Sliding-window FDMAA advancing one observation at a time; each estimate
/// is dated at the last day of its window.
pub fn local_hurst(r: &ReturnSeries, cfg: &FdmaaConfig) -> Result<HurstSeries, HurstError> {
    cfg.validate()?;
    let n = cfg.window;
    if r.len() < n {
        return Err(HurstError::TooShort {
            len: r.len(),
            window: n,
        });
    }
    let grid = cfg.scale_grid();
    let fits: Vec<Option<HurstFit>> = (0..=r.len() - n)
        .into_par_iter()
        .map(|start| {
            fluctuation_function(&r.values[start..start + n], &grid, cfg.segment_rule)
                .and_then(|f| fit_hurst(&grid, &f))
                .ok()
        })
        .collect();
    Ok(HurstSeries {
        dates: r.dates[n - 1..].to_vec(),
        h: fits.iter().map(|f| f.map(|f| f.h)).collect(),
        r2: fits.iter().map(|f| f.map(|f| f.r2)).collect(),
    })
}
