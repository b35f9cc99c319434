//! In-sample conditional R-squared, expanding-window out-of-sample
//! forecasts against the historical average, out-of-sample R-squared and
//! the Clark–West MSFE-adjusted test.
//!
//! Indexing: `y[s]` and `x[s]` belong to the same month `s`; a forecast of
//! month `j` uses `x[j - 1]` and coefficients fitted on pairs
//! `(x[s - 1], y[s])` for `s < j`.

use crate::marketdata::YearMonth;
use crate::regress::{self, RegressError};
use crate::stats;

/// Estimation months required before the first forecast.
pub const MIN_ESTIMATION_WINDOW: usize = 60;
/// Masked months required by the Clark–West test.
pub const MIN_CW_MONTHS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluateError {
    #[error("first forecast at position {start} leaves {window} estimation months; {MIN_ESTIMATION_WINDOW} required")]
    WindowTooShort { start: usize, window: usize },
    #[error("first forecast position {start} is beyond the {len} observations")]
    StartOutOfRange { start: usize, len: usize },
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
}

/// Aligned actual, model and benchmark values over the forecast months.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub id: String,
    pub months: Vec<YearMonth>,
    pub actual: Vec<f64>,
    pub model: Vec<f64>,
    pub ha: Vec<f64>,
    /// Forecasts that fell back to the historical average.
    pub fallbacks: usize,
}

impl ForecastSet {
    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    /// The benchmark scored against itself.
    pub fn benchmark(&self) -> ForecastSet {
        ForecastSet {
            id: "HA".into(),
            model: self.ha.clone(),
            fallbacks: 0,
            ..self.clone()
        }
    }
}

/// `1 - sum I(r - fit)^2 / sum I(r - mean(r))^2` with the full-sample mean.
pub fn conditional_r2(actual: &[f64], fitted: &[f64], mask: &[bool]) -> Option<f64> {
    let rbar = stats::mean(actual);
    let (mut num, mut den, mut n) = (0.0, 0.0, 0);
    for ((a, f), &m) in actual.iter().zip(fitted).zip(mask) {
        if m {
            num += (a - f).powi(2);
            den += (a - rbar).powi(2);
            n += 1;
        }
    }
    (n > 0 && den > 0.0).then(|| 1.0 - num / den)
}

/// Expanding mean of `y[..j]` for every target `j` in `start..=y.len()`; the
/// last value is the forecast beyond the sample.
pub fn historical_average(y: &[f64], start: usize) -> Vec<f64> {
    assert!(start >= 1, "the historical average needs one observation");
    let mut sum: f64 = y[..start.min(y.len())].iter().sum();
    let mut out = Vec::with_capacity(y.len() + 1 - start.min(y.len()));
    for j in start..=y.len() {
        if j > start {
            sum += y[j - 1];
        }
        out.push(sum / j as f64);
    }
    out
}

fn check_start(len: usize, start: usize) -> Result<(), EvaluateError> {
    if start >= len {
        return Err(EvaluateError::StartOutOfRange { start, len });
    }
    if start < MIN_ESTIMATION_WINDOW + 1 {
        return Err(EvaluateError::WindowTooShort {
            start,
            window: start.saturating_sub(1),
        });
    }
    Ok(())
}

fn forecast_set(
    id: &str,
    months: &[YearMonth],
    y: &[f64],
    start: usize,
    model: Vec<f64>,
    fallbacks: usize,
) -> ForecastSet {
    let mut ha = historical_average(y, start);
    ha.pop();
    ForecastSet {
        id: id.to_string(),
        months: months[start..].to_vec(),
        actual: y[start..].to_vec(),
        model,
        ha,
        fallbacks,
    }
}

/// One-step forecasts from the bivariate predictive regression re-estimated
/// on an expanding window. Singular windows fall back to the historical
/// average.
pub fn recursive_forecast(
    id: &str,
    months: &[YearMonth],
    y: &[f64],
    x: &[f64],
    start: usize,
) -> Result<ForecastSet, EvaluateError> {
    if x.len() != y.len() || months.len() != y.len() {
        return Err(EvaluateError::Length(y.len(), x.len()));
    }
    check_start(y.len(), start)?;
    let mut model = Vec::with_capacity(y.len() - start);
    let mut fallbacks = 0;
    for j in start..y.len() {
        match regress::ols_fit(&y[1..j], &[&x[..j - 1]]) {
            Ok(fit) => model.push(fit.predict(&[x[j - 1]])),
            Err(_) => {
                fallbacks += 1;
                model.push(stats::mean(&y[..j]));
            }
        }
    }
    Ok(forecast_set(id, months, y, start, model, fallbacks))
}

/// Principal-component forecast of month `j` from rows `0..j` of the block.
/// Columns constant within the window carry no information and are left out
/// of that window's components.
pub fn pc_forecast_at(
    y: &[f64],
    cols: &[&[f64]],
    j: usize,
    k_max: usize,
) -> Result<f64, RegressError> {
    let varying: Vec<&[f64]> = cols
        .iter()
        .filter(|c| c[..j].iter().any(|v| *v != c[0]))
        .map(|c| &c[..j])
        .collect();
    if varying.is_empty() {
        return Err(RegressError::ZeroVariance(0));
    }
    let pca = regress::pca_extract(&varying, j, k_max.min(varying.len()))?;
    let scores = pca.scores(&varying, j);
    let mut best: Option<(regress::OlsFit, usize)> = None;
    let mut first_err = None;
    for k in 1..=pca.k {
        let xs: Vec<&[f64]> = scores[..k].iter().map(|c| &c[..j - 1]).collect();
        match regress::ols_fit(&y[1..j], &xs) {
            Ok(fit) => {
                if best
                    .as_ref()
                    .is_none_or(|(b, _)| fit.adjusted_r2 > b.adjusted_r2)
                {
                    best = Some((fit, k));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((fit, k)) => {
            let last: Vec<f64> = scores[..k].iter().map(|c| c[j - 1]).collect();
            Ok(fit.predict(&last))
        }
        None => Err(first_err.expect("at least one K was tried")),
    }
}

/// Expanding-window principal-component forecasts; standardization,
/// components and `K` use information through the forecast origin only.
pub fn recursive_pc_forecast(
    id: &str,
    months: &[YearMonth],
    y: &[f64],
    cols: &[&[f64]],
    start: usize,
    k_max: usize,
) -> Result<ForecastSet, EvaluateError> {
    for c in cols {
        if c.len() != y.len() {
            return Err(EvaluateError::Length(y.len(), c.len()));
        }
    }
    if months.len() != y.len() {
        return Err(EvaluateError::Length(y.len(), months.len()));
    }
    check_start(y.len(), start)?;
    let mut model = Vec::with_capacity(y.len() - start);
    let mut fallbacks = 0;
    for j in start..y.len() {
        match pc_forecast_at(y, cols, j, k_max) {
            Ok(f) => model.push(f),
            Err(_) => {
                fallbacks += 1;
                model.push(stats::mean(&y[..j]));
            }
        }
    }
    Ok(forecast_set(id, months, y, start, model, fallbacks))
}

/// Masked sum of squared forecast errors.
pub fn masked_sse(actual: &[f64], forecast: &[f64], mask: &[bool]) -> f64 {
    actual
        .iter()
        .zip(forecast)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, f), _)| (a - f).powi(2))
        .sum()
}

/// `1 - SSE(model) / SSE(HA)` over the masked months.
pub fn r2_os(fs: &ForecastSet, mask: &[bool]) -> Option<f64> {
    if !mask.iter().take(fs.len()).any(|&m| m) {
        return None;
    }
    let den = masked_sse(&fs.actual, &fs.ha, mask);
    (den > 0.0).then(|| 1.0 - masked_sse(&fs.actual, &fs.model, mask) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarkWest {
    pub statistic: f64,
    pub p_value: f64,
}

/// MSFE-adjusted comparison of the model against the historical average:
/// the Newey–West t-ratio of the mean adjusted loss differential, with an
/// upper-tail standard normal p-value.
pub fn clark_west(fs: &ForecastSet, mask: &[bool]) -> Option<ClarkWest> {
    let f: Vec<f64> = (0..fs.len())
        .filter(|&i| mask[i])
        .map(|i| {
            let (r, m, h) = (fs.actual[i], fs.model[i], fs.ha[i]);
            (r - h).powi(2) - ((r - m).powi(2) - (h - m).powi(2))
        })
        .collect();
    if f.len() < MIN_CW_MONTHS || f.iter().all(|v| *v == f[0]) {
        return None;
    }
    let fit = regress::ols_fit(&f, &[]).ok()?;
    let statistic = fit.hac_tstats?[0];
    Some(ClarkWest {
        statistic,
        p_value: stats::normal_upper_tail(statistic),
    })
}

/// `***`, `**` or `*` at the 1%, 5% and 10% levels.
pub fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.01 => "***",
        Some(p) if p < 0.05 => "**",
        Some(p) if p < 0.10 => "*",
        _ => "",
    }
}
