//! The 14 macroeconomic predictors built from the monthly panel and the 14
//! binary technical signals built from month-end prices and monthly volume.
//!
//! Units: TBR, LTY, TMS and DYS are annual percent; LTR, DRS and INFL are
//! monthly percent; ERPV is the annualized standard deviation of the
//! decimal premium. Valuation ratios are natural logs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::marketdata::{DailySeries, MacroPanel, MarketDataError, PremiumSeries, YearMonth};

pub const MACRO_NAMES: [&str; 14] = [
    "DP", "DY", "EP", "DE", "ERPV", "BM", "NEER", "TBR", "LTY", "LTR", "TMS", "DYS", "DRS", "INFL",
];

pub const TECH_NAMES: [&str; 14] = [
    "MA(1,9)",
    "MA(1,12)",
    "MA(2,9)",
    "MA(2,12)",
    "MA(3,9)",
    "MA(3,12)",
    "MOM(9)",
    "MOM(12)",
    "VOL(1,9)",
    "VOL(1,12)",
    "VOL(2,9)",
    "VOL(2,12)",
    "VOL(3,9)",
    "VOL(3,12)",
];

const ERPV_WINDOW: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error(transparent)]
    Data(#[from] MarketDataError),
    #[error("no volume for {0}")]
    MissingVolume(YearMonth),
    #[error("months are not consecutive at {0}")]
    Gap(YearMonth),
    #[error("no month has every predictor defined")]
    Empty,
}

/// Averaging convention for the moving-average rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaConvention {
    /// `(1/j) * sum_{i=0}^{j-1} P_{t-i}`.
    #[default]
    Standard,
    /// `(1/j) * sum_{i=1}^{j-1} P_{t-i}`, the formula exactly as printed.
    Literal,
}

/// Predictor group used by the principal-component models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Econ,
    Tech,
    All,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Econ, Group::Tech, Group::All];

    pub fn label(self) -> &'static str {
        match self {
            Group::Econ => "PC-ECON",
            Group::Tech => "PC-TECH",
            Group::All => "PC-ALL",
        }
    }
}

fn moving_average(x: &[f64], t: usize, j: usize, conv: MaConvention) -> f64 {
    let first = match conv {
        MaConvention::Standard => 0,
        MaConvention::Literal => 1,
    };
    (first..j).map(|i| x[t - i]).sum::<f64>() / j as f64
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `1` when the short moving average is at or above the long one; the first
/// `l - 1` values are undefined.
pub fn ma_signal(prices: &[f64], s: usize, l: usize, conv: MaConvention) -> Vec<Option<f64>> {
    assert!(
        0 < s && s < l,
        "moving-average lengths must satisfy 0 < s < l"
    );
    (0..prices.len())
        .map(|t| {
            (t + 1 >= l).then(|| {
                indicator(moving_average(prices, t, s, conv) >= moving_average(prices, t, l, conv))
            })
        })
        .collect()
}

/// `1` when `P_t >= P_{t-m}`; the first `m` values are undefined.
pub fn mom_signal(prices: &[f64], m: usize) -> Vec<Option<f64>> {
    (0..prices.len())
        .map(|t| (t >= m).then(|| indicator(prices[t] >= prices[t - m])))
        .collect()
}

/// Cumulative signed volume from the second observation onward; a
/// non-negative price change counts as up.
pub fn on_balance_volume(prices: &[f64], volumes: &[f64]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(prices.len());
    let mut acc = 0.0;
    for k in 0..prices.len() {
        if k == 0 {
            out.push(None);
            continue;
        }
        let dir = if prices[k] - prices[k - 1] >= 0.0 {
            1.0
        } else {
            -1.0
        };
        acc += volumes[k] * dir;
        out.push(Some(acc));
    }
    out
}

/// Moving-average cross rule applied to on-balance volume.
pub fn obv_signal(
    prices: &[f64],
    volumes: &[f64],
    s: usize,
    l: usize,
    conv: MaConvention,
) -> Vec<Option<f64>> {
    let obv = on_balance_volume(prices, volumes);
    let dense: Vec<f64> = obv.iter().skip(1).copied().flatten().collect();
    let mut out = vec![None];
    out.extend(ma_signal(&dense, s, l, conv));
    out.truncate(prices.len());
    out
}

/// Named monthly columns with undefined leading values.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSet {
    pub months: Vec<YearMonth>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

fn check_consecutive(months: &[YearMonth]) -> Result<(), PredictorError> {
    for w in months.windows(2) {
        if w[1] != w[0].next() {
            return Err(PredictorError::Gap(w[1]));
        }
    }
    Ok(())
}

/// The 14 macro columns on the panel's months. ERPV at `t` uses the 12
/// premiums ending at `t`.
pub fn build_macro(
    panel: &MacroPanel,
    premium: &PremiumSeries,
) -> Result<ColumnSet, PredictorError> {
    let months = panel.months().to_vec();
    check_consecutive(&months)?;
    let c = |n: &str| panel.column(n);
    let (index, d12, e12) = (c("Index")?, c("D12")?, c("E12")?);
    let (bm, ntis, tbl, lty, ltr) = (c("bm")?, c("ntis")?, c("tbl")?, c("lty")?, c("ltr")?);
    let (aaa, baa, corpr, infl) = (c("AAA")?, c("BAA")?, c("corpr")?, c("infl")?);
    let n = months.len();
    let all = |f: &dyn Fn(usize) -> f64| (0..n).map(|t| Some(f(t))).collect::<Vec<_>>();
    let lagged =
        |f: &dyn Fn(usize) -> f64| (0..n).map(|t| (t > 0).then(|| f(t))).collect::<Vec<_>>();

    let prem: BTreeMap<YearMonth, f64> = premium
        .months
        .iter()
        .copied()
        .zip(premium.values.iter().copied())
        .collect();
    let erpv = months
        .iter()
        .map(|&m| {
            let window: Option<Vec<f64>> = (0..ERPV_WINDOW as i64)
                .map(|k| prem.get(&m.offset(-k)).map(|v| v / 100.0))
                .collect();
            // centring on the first value makes a constant window exactly zero
            window.map(|w| {
                let centred: Vec<f64> = w.iter().map(|v| v - w[0]).collect();
                12f64.sqrt() * crate::stats::sample_std(&centred)
            })
        })
        .collect();

    let columns = vec![
        all(&|t| d12[t].ln() - index[t].ln()),
        lagged(&|t| d12[t].ln() - index[t - 1].ln()),
        all(&|t| e12[t].ln() - index[t].ln()),
        all(&|t| d12[t].ln() - e12[t].ln()),
        erpv,
        all(&|t| bm[t]),
        all(&|t| ntis[t]),
        all(&|t| 100.0 * tbl[t]),
        all(&|t| 100.0 * lty[t]),
        all(&|t| 100.0 * ltr[t]),
        all(&|t| 100.0 * (lty[t] - tbl[t])),
        all(&|t| 100.0 * (baa[t] - aaa[t])),
        all(&|t| 100.0 * (corpr[t] - ltr[t])),
        lagged(&|t| 100.0 * infl[t - 1]),
    ];
    Ok(ColumnSet {
        months,
        names: MACRO_NAMES.iter().map(|s| s.to_string()).collect(),
        columns,
    })
}

/// The 14 technical signals on the months of the daily series.
pub fn build_technical(
    daily: &DailySeries,
    conv: MaConvention,
) -> Result<ColumnSet, PredictorError> {
    let closes = daily.monthly_close();
    let months: Vec<YearMonth> = closes.iter().map(|c| c.0).collect();
    check_consecutive(&months)?;
    let prices: Vec<f64> = closes.iter().map(|c| c.1).collect();
    let volumes = daily
        .monthly_volume()
        .into_iter()
        .map(|(m, v)| v.ok_or(PredictorError::MissingVolume(m)))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut columns = Vec::with_capacity(14);
    for (s, l) in [(1, 9), (1, 12), (2, 9), (2, 12), (3, 9), (3, 12)] {
        columns.push(ma_signal(&prices, s, l, conv));
    }
    columns.push(mom_signal(&prices, 9));
    columns.push(mom_signal(&prices, 12));
    for (s, l) in [(1, 9), (1, 12), (2, 9), (2, 12), (3, 9), (3, 12)] {
        columns.push(obv_signal(&prices, &volumes, s, l, conv));
    }
    Ok(ColumnSet {
        months,
        names: TECH_NAMES.iter().map(|s| s.to_string()).collect(),
        columns,
    })
}

/// Monthly predictors on months where every column is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorPanel {
    pub months: Vec<YearMonth>,
    pub macro_cols: Vec<Vec<f64>>,
    pub tech_cols: Vec<Vec<f64>>,
    /// Months of the joined timeline dropped for missing history.
    pub dropped: usize,
}

impl PredictorPanel {
    pub fn assemble(macros: &ColumnSet, tech: &ColumnSet) -> Result<Self, PredictorError> {
        let tech_pos: BTreeMap<YearMonth, usize> = tech
            .months
            .iter()
            .enumerate()
            .map(|(i, m)| (*m, i))
            .collect();
        let mut months = Vec::new();
        let mut macro_cols = vec![Vec::new(); macros.columns.len()];
        let mut tech_cols = vec![Vec::new(); tech.columns.len()];
        let mut dropped = 0;
        for (i, m) in macros.months.iter().enumerate() {
            let Some(&j) = tech_pos.get(m) else { continue };
            let mrow: Option<Vec<f64>> = macros.columns.iter().map(|c| c[i]).collect();
            let trow: Option<Vec<f64>> = tech.columns.iter().map(|c| c[j]).collect();
            match (mrow, trow) {
                (Some(a), Some(b)) => {
                    months.push(*m);
                    a.into_iter()
                        .zip(macro_cols.iter_mut())
                        .for_each(|(v, c)| c.push(v));
                    b.into_iter()
                        .zip(tech_cols.iter_mut())
                        .for_each(|(v, c)| c.push(v));
                }
                _ => dropped += 1,
            }
        }
        if months.is_empty() {
            return Err(PredictorError::Empty);
        }
        Ok(Self {
            months,
            macro_cols,
            tech_cols,
            dropped,
        })
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn position(&self, month: YearMonth) -> Option<usize> {
        self.months.binary_search(&month).ok()
    }

    /// Column names in panel order: the macro block then the technical block.
    pub fn names() -> Vec<&'static str> {
        MACRO_NAMES
            .iter()
            .chain(TECH_NAMES.iter())
            .copied()
            .collect()
    }

    pub fn columns(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.macro_cols.iter().chain(self.tech_cols.iter())
    }

    pub fn group(&self, g: Group) -> Vec<&[f64]> {
        match g {
            Group::Econ => self.macro_cols.iter().map(|c| c.as_slice()).collect(),
            Group::Tech => self.tech_cols.iter().map(|c| c.as_slice()).collect(),
            Group::All => self.columns().map(|c| c.as_slice()).collect(),
        }
    }
}
