//! Mean-variance allocation between equities and the risk-free asset driven
//! by premium forecasts, with turnover costs, certainty-equivalent returns
//! and the holding-period breakdown after Bullish Index shocks.
//!
//! Returns here are monthly decimals; premiums and forecasts arrive in
//! percent and are converted by the configured convention.

use serde::{Deserialize, Serialize};

use crate::evaluate::ForecastSet;
use crate::marketdata::YearMonth;
use crate::regime::{window_mask, Shocks};
use crate::stats;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AllocateError {
    #[error("invalid allocation setting: {0}")]
    Config(String),
    #[error("forecast for {month} has only {available} trailing months for the variance window of {window}")]
    ShortHistory {
        month: YearMonth,
        available: usize,
        window: usize,
    },
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
}

/// How percent log premiums become decimal excess returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnConvention {
    /// `p / 100`.
    #[default]
    LogDirect,
    /// `exp(p / 100) - 1`.
    Simple,
}

impl ReturnConvention {
    pub fn to_decimal(self, pct: f64) -> f64 {
        match self {
            ReturnConvention::LogDirect => pct / 100.0,
            ReturnConvention::Simple => (pct / 100.0).exp_m1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocationConfig {
    pub kappa: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub variance_window: usize,
    /// Proportional cost per unit of turnover, in basis points.
    pub cost_bps: f64,
    pub returns: ReturnConvention,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            kappa: 5.0,
            weight_min: 0.0,
            weight_max: 1.5,
            variance_window: 60,
            cost_bps: 0.0,
            returns: ReturnConvention::LogDirect,
        }
    }
}

impl AllocationConfig {
    pub fn validate(&self) -> Result<(), AllocateError> {
        let bad = |m: String| Err(AllocateError::Config(m));
        if !(self.kappa > 0.0) {
            return bad(format!("kappa = {} must be positive", self.kappa));
        }
        if !(self.weight_min <= self.weight_max) {
            return bad(format!(
                "weight bounds [{}, {}] are not ordered",
                self.weight_min, self.weight_max
            ));
        }
        if self.variance_window < 12 {
            return bad(format!(
                "variance_window = {} is below 12",
                self.variance_window
            ));
        }
        if !(self.cost_bps >= 0.0) {
            return bad(format!("cost_bps = {} must be non-negative", self.cost_bps));
        }
        Ok(())
    }

    pub fn with_cost(mut self, cost_bps: f64) -> Self {
        self.cost_bps = cost_bps;
        self
    }
}

/// `clamp(forecast / (kappa * variance), min, max)`.
pub fn weight(forecast: f64, variance: f64, cfg: &AllocationConfig) -> f64 {
    (forecast / (cfg.kappa * variance)).clamp(cfg.weight_min, cfg.weight_max)
}

/// Weights for aligned forecasts and variance forecasts; undefined where the
/// variance is missing or not positive.
pub fn weights(
    forecasts: &[f64],
    variances: &[Option<f64>],
    cfg: &AllocationConfig,
) -> Vec<Option<f64>> {
    forecasts
        .iter()
        .zip(variances)
        .map(|(f, v)| v.filter(|v| *v > 0.0).map(|v| weight(*f, v, cfg)))
        .collect()
}

/// Sample variance of `excess[j - window..j]`, the months before target `j`.
pub fn trailing_variance(excess: &[f64], j: usize, window: usize) -> Option<f64> {
    (j >= window).then(|| stats::sample_variance(&excess[j - window..j]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioTrack {
    pub months: Vec<YearMonth>,
    pub weights: Vec<f64>,
    pub gross: Vec<f64>,
    pub net: Vec<f64>,
    /// Running sum of `|w_t - w_{t-1}|` starting from a zero position.
    pub turnover: Vec<f64>,
}

impl PortfolioTrack {
    pub fn len(&self) -> usize {
        self.net.len()
    }

    pub fn is_empty(&self) -> bool {
        self.net.is_empty()
    }
}

/// `w * equity + (1 - w) * rf`, less `cost_bps` per unit of weight change.
pub fn portfolio_returns(
    months: &[YearMonth],
    weights: &[f64],
    equity: &[f64],
    rf: &[f64],
    cost_bps: f64,
) -> Result<PortfolioTrack, AllocateError> {
    let n = weights.len();
    for len in [months.len(), equity.len(), rf.len()] {
        if len != n {
            return Err(AllocateError::Length(n, len));
        }
    }
    let cost = cost_bps / 10_000.0;
    let mut prev = 0.0;
    let mut cum = 0.0;
    let mut track = PortfolioTrack {
        months: months.to_vec(),
        weights: weights.to_vec(),
        gross: Vec::with_capacity(n),
        net: Vec::with_capacity(n),
        turnover: Vec::with_capacity(n),
    };
    for t in 0..n {
        let w = weights[t];
        let gross = w * equity[t] + (1.0 - w) * rf[t];
        let dw = (w - prev).abs();
        cum += dw;
        prev = w;
        track.gross.push(gross);
        track.net.push(gross - cost * dw);
        track.turnover.push(cum);
    }
    Ok(track)
}

/// Runs the allocation for one forecast set. `premium_pct` and `rf` cover the
/// whole monthly sample; the forecast set starts at position `start` of it.
pub fn backtest(
    model: &[f64],
    premium_pct: &[f64],
    rf: &[f64],
    months: &[YearMonth],
    start: usize,
    cfg: &AllocationConfig,
) -> Result<PortfolioTrack, AllocateError> {
    cfg.validate()?;
    let n = premium_pct.len();
    if rf.len() != n || months.len() != n {
        return Err(AllocateError::Length(n, rf.len().min(months.len())));
    }
    if model.len() != n - start {
        return Err(AllocateError::Length(n - start, model.len()));
    }
    let excess: Vec<f64> = premium_pct
        .iter()
        .map(|p| cfg.returns.to_decimal(*p))
        .collect();
    let mut w = Vec::with_capacity(model.len());
    for (i, f) in model.iter().enumerate() {
        let j = start + i;
        let var = trailing_variance(&excess, j, cfg.variance_window).ok_or(
            AllocateError::ShortHistory {
                month: months[j],
                available: j,
                window: cfg.variance_window,
            },
        )?;
        w.push(if var > 0.0 {
            weight(cfg.returns.to_decimal(*f), var, cfg)
        } else {
            cfg.weight_min
        });
    }
    let equity: Vec<f64> = (start..n).map(|j| excess[j] + rf[j]).collect();
    portfolio_returns(&months[start..], &w, &equity, &rf[start..], cfg.cost_bps)
}

/// Model and benchmark tracks for a forecast set.
pub fn backtest_pair(
    fs: &ForecastSet,
    premium_pct: &[f64],
    rf: &[f64],
    months: &[YearMonth],
    cfg: &AllocationConfig,
) -> Result<(PortfolioTrack, PortfolioTrack), AllocateError> {
    let start = premium_pct.len() - fs.len();
    Ok((
        backtest(&fs.model, premium_pct, rf, months, start, cfg)?,
        backtest(&fs.ha, premium_pct, rf, months, start, cfg)?,
    ))
}

/// `mean - kappa / 2 * var` of the masked returns (sample variance); needs
/// two masked months.
pub fn cer(returns: &[f64], kappa: f64, mask: &[bool]) -> Option<f64> {
    let sel: Vec<f64> = returns
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(r, _)| *r)
        .collect();
    (sel.len() >= 2).then(|| stats::mean(&sel) - 0.5 * kappa * stats::sample_variance(&sel))
}

/// Annualized percent gain `1200 * (CER_model - CER_HA)` on net returns.
pub fn cer_gain(
    model: &PortfolioTrack,
    ha: &PortfolioTrack,
    kappa: f64,
    mask: &[bool],
) -> Option<f64> {
    Some(1200.0 * (cer(&model.net, kappa, mask)? - cer(&ha.net, kappa, mask)?))
}

/// Offset ranges after a shock used for the holding-period table.
pub const HOLDING_BUCKETS: [(i64, i64); 4] = [(1, 3), (4, 6), (7, 9), (10, 12)];

/// Months `t + from ..= t + to` after any shock, on the full timeline, then
/// read at `positions`; months off the timeline are never in the window.
pub fn offset_mask(events: &[bool], from: i64, to: i64, positions: &[Option<usize>]) -> Vec<bool> {
    let full = window_mask(events, from, to);
    positions
        .iter()
        .map(|i| i.is_some_and(|i| full[i]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldingCell {
    pub model: String,
    pub regime: &'static str,
    pub from: i64,
    pub to: i64,
    pub cer_gain: Option<f64>,
}

/// CER gains pooled over `[t + from, t + to]` after every peak and every
/// trough for each `(model, ha)` pair of tracks. `positions` maps each track
/// month onto the shock timeline; `within` further restricts track months.
pub fn holding_period_grid(
    tracks: &[(String, PortfolioTrack, PortfolioTrack)],
    shocks: &Shocks,
    positions: &[Option<usize>],
    buckets: &[(i64, i64)],
    kappa: f64,
    within: Option<&[bool]>,
) -> Vec<HoldingCell> {
    let mut cells = Vec::new();
    for (name, model, ha) in tracks {
        for (regime, events) in [("peak", &shocks.peak), ("trough", &shocks.trough)] {
            for &(from, to) in buckets {
                let mut mask = offset_mask(events, from, to, positions);
                if let Some(w) = within {
                    mask.iter_mut().zip(w).for_each(|(m, w)| *m &= *w);
                }
                cells.push(HoldingCell {
                    model: name.clone(),
                    regime,
                    from,
                    to,
                    cer_gain: cer_gain(model, ha, kappa, &mask),
                });
            }
        }
    }
    cells
}
