//! End-to-end run from one configuration: ingestion, local Hurst exponents,
//! Bullish Index regimes, predictors, in-sample and out-of-sample evaluation,
//! allocation and the summary report.
//!
//! Stages run in a fixed order and each one writes its own files; asking for
//! a stage runs every stage before it. All randomness flows from the single
//! configured seed, so identical configuration and inputs give identical
//! bytes.

mod config;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

pub use config::*;
pub use output::{num, opt, sha256_hex, OutputDir, Table, NA};

use crate::allocate::{self, PortfolioTrack, HOLDING_BUCKETS};
use crate::evaluate::{self, ForecastSet, MIN_ESTIMATION_WINDOW};
use crate::garch;
use crate::hurst::{self, HurstSeries};
use crate::marketdata::{
    self, DailySeries, MacroPanel, PremiumSeries, RecessionCalendar, ReturnSeries, YearMonth,
};
use crate::predictors::{self, Group, PredictorPanel, MACRO_NAMES, TECH_NAMES};
use crate::regime::{self, BullishSeries, RegimeMasks, ShockRule, Shocks};
use crate::regress;
use crate::stats;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Seed purpose for the in-sample wild bootstrap.
const BOOTSTRAP_PURPOSE: u64 = 1;

/// Error from any stage; `stage` names the step or input that failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: String,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}`: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

fn tag<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Hurst,
    Regime,
    Predictors,
    Insample,
    Oos,
    Allocate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Hurst,
        Stage::Regime,
        Stage::Predictors,
        Stage::Insample,
        Stage::Oos,
        Stage::Allocate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Hurst => "hurst",
            Stage::Regime => "regime",
            Stage::Predictors => "predictors",
            Stage::Insample => "insample",
            Stage::Oos => "oos",
            Stage::Allocate => "allocate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    /// Stage names, plus `all` for the last stage.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(Stage::Report);
        }
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Months admitted to the allocation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskFilter {
    #[default]
    All,
    ExcludeRecession,
    /// Months strictly before the given one.
    Before(YearMonth),
    /// The given month onwards.
    From(YearMonth),
}

impl MaskFilter {
    pub fn keeps(&self, month: YearMonth, in_recession: bool) -> bool {
        match *self {
            MaskFilter::All => true,
            MaskFilter::ExcludeRecession => !in_recession,
            MaskFilter::Before(m) => month < m,
            MaskFilter::From(m) => month >= m,
        }
    }
}

impl fmt::Display for MaskFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskFilter::All => f.write_str("all"),
            MaskFilter::ExcludeRecession => f.write_str("exclude-recession"),
            MaskFilter::Before(m) => write!(f, "before={m}"),
            MaskFilter::From(m) => write!(f, "from={m}"),
        }
    }
}

impl FromStr for MaskFilter {
    type Err = String;

    /// `all`, `exclude-recession`, `before=YYYY-MM` or `from=YYYY-MM`.
    fn from_str(s: &str) -> Result<Self, String> {
        let month = |v: &str| v.parse::<YearMonth>().map_err(|e| e.to_string());
        match s.split_once('=') {
            None if s == "all" => Ok(MaskFilter::All),
            None if s == "exclude-recession" => Ok(MaskFilter::ExcludeRecession),
            Some(("before", v)) => Ok(MaskFilter::Before(month(v)?)),
            Some(("from", v)) => Ok(MaskFilter::From(month(v)?)),
            _ => Err(format!(
                "unknown mask `{s}`; expected all, exclude-recession, before=YYYY-MM or from=YYYY-MM"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Last stage to run.
    pub stage: Stage,
    pub mask: MaskFilter,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stage: Stage::Report,
            mask: MaskFilter::All,
        }
    }
}

/// Contents of `manifest.json`. Carries no timestamps or paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub stage: String,
    pub seed: u64,
    pub config_digest: String,
    pub allocation_mask: String,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each file written, excluding the manifest.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

struct Data {
    daily: DailySeries,
    panel: MacroPanel,
    calendar: RecessionCalendar,
    returns: ReturnSeries,
    premium: PremiumSeries,
    hashes: BTreeMap<String, String>,
}

/// Consecutive months carrying the premium, the risk-free rate and all 28
/// predictors. `y[s]` and `cols[k][s]` refer to the same month.
struct Sample {
    months: Vec<YearMonth>,
    y: Vec<f64>,
    rf: Vec<f64>,
    cols: Vec<Vec<f64>>,
    /// Premium and macro predictors over every month of the daily span where
    /// each is defined, for the summary table.
    span: Vec<(&'static str, Vec<f64>)>,
}

impl Sample {
    fn len(&self) -> usize {
        self.y.len()
    }

    fn group(&self, g: Group) -> Vec<&[f64]> {
        let range = match g {
            Group::Econ => 0..MACRO_NAMES.len(),
            Group::Tech => MACRO_NAMES.len()..self.cols.len(),
            Group::All => 0..self.cols.len(),
        };
        self.cols[range].iter().map(|c| c.as_slice()).collect()
    }
}

/// Runs every stage up to `opts.stage`, writing outputs and the manifest
/// into the configured output directory.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let mut out = OutputDir::create(&cfg.output.dir)?;
    let last = opts.stage;
    let data = ingest(cfg, &mut out)?;
    'stages: {
        if last < Stage::Hurst {
            break 'stages;
        }
        let hs = hurst_stage(cfg, &data, &mut out)?;
        if last < Stage::Regime {
            break 'stages;
        }
        let (bullish, shocks) = regime_stage(cfg, &data, &hs, &mut out)?;
        if last < Stage::Predictors {
            break 'stages;
        }
        let sample = predictor_stage(cfg, &data, &mut out)?;
        if last < Stage::Insample {
            break 'stages;
        }
        insample_stage(cfg, &data, &sample, &bullish, &shocks, &mut out)?;
        if last < Stage::Oos {
            break 'stages;
        }
        let sets = oos_stage(cfg, &data, &sample, &bullish, &shocks, &mut out)?;
        if last < Stage::Allocate {
            break 'stages;
        }
        let tracks = allocate_stage(
            cfg, opts, &data, &sample, &bullish, &shocks, &sets, &mut out,
        )?;
        if last < Stage::Report {
            break 'stages;
        }
        report_stage(cfg, &data, &sample, &hs, &bullish, &sets, &tracks, &mut out)?;
    }
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        stage: last.name().to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        allocation_mask: opts.mask.to_string(),
        inputs: data.hashes.clone(),
        outputs: out.hashes().clone(),
    };
    out.json(MANIFEST_FILE, &manifest)?;
    Ok(RunSummary {
        dir: out.dir().to_path_buf(),
        manifest,
    })
}

fn read_input(stage: &'static str, path: &std::path::Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path)
        .map_err(|e| PipelineError::new(stage, format!("cannot read {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Span {
    rows: usize,
    first: String,
    last: String,
}

fn span<T: fmt::Display>(items: &[T]) -> Span {
    Span {
        rows: items.len(),
        first: items.first().map_or_else(String::new, |v| v.to_string()),
        last: items.last().map_or_else(String::new, |v| v.to_string()),
    }
}

fn ingest(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<Data, PipelineError> {
    let raw_daily = read_input("daily", &cfg.inputs.daily)?;
    let raw_macro = read_input("macro", &cfg.inputs.macro_panel)?;
    let raw_rec = read_input("recessions", &cfg.inputs.recessions)?;
    let daily = marketdata::read_daily_prices(raw_daily.as_slice()).map_err(tag("daily"))?;
    let panel = marketdata::read_macro_panel(raw_macro.as_slice()).map_err(tag("macro"))?;
    let calendar = marketdata::read_recessions(raw_rec.as_slice()).map_err(tag("recessions"))?;
    let returns = marketdata::daily_log_returns(&daily).map_err(tag("daily"))?;
    let premium =
        marketdata::monthly_equity_premium(&panel, cfg.predictors.premium).map_err(tag("macro"))?;
    let hashes = BTreeMap::from([
        ("daily".to_string(), sha256_hex(&raw_daily)),
        ("macro".to_string(), sha256_hex(&raw_macro)),
        ("recessions".to_string(), sha256_hex(&raw_rec)),
    ]);

    #[derive(Serialize)]
    struct Ingested {
        daily: Span,
        returns: Span,
        macro_panel: Span,
        premium: Span,
        recession_intervals: usize,
    }
    out.json(
        "ingest.json",
        &Ingested {
            daily: span(daily.dates()),
            returns: span(&returns.dates),
            macro_panel: span(panel.months()),
            premium: span(&premium.months),
            recession_intervals: calendar.intervals().len(),
        },
    )?;
    Ok(Data {
        daily,
        panel,
        calendar,
        returns,
        premium,
        hashes,
    })
}

fn hurst_stage(
    cfg: &PipelineConfig,
    d: &Data,
    out: &mut OutputDir,
) -> Result<HurstSeries, PipelineError> {
    let input = if cfg.garch.filter {
        let params = garch::fit_garch11(&d.returns).map_err(tag("hurst"))?;
        out.json("garch.json", &params)?;
        garch::filter_returns(&d.returns, &params)
    } else {
        d.returns.clone()
    };
    let hs = hurst::local_hurst(&input, &cfg.hurst).map_err(tag("hurst"))?;
    let mut full = Table::new(["date", "h", "r2"]);
    let mut fig = Table::new(["date", "h"]);
    for ((date, h), r2) in hs.dates.iter().zip(&hs.h).zip(&hs.r2) {
        full.push(vec![date.to_string(), opt(*h), opt(*r2)]);
        fig.push(vec![date.to_string(), opt(*h)]);
    }
    out.table("hurst.csv", &full)?;
    out.table("fig1_hurst.csv", &fig)?;
    Ok(hs)
}

fn regime_stage(
    cfg: &PipelineConfig,
    d: &Data,
    hs: &HurstSeries,
    out: &mut OutputDir,
) -> Result<(BullishSeries, Shocks), PipelineError> {
    let bullish =
        regime::bullish_series(&d.returns, hs, cfg.regime.h_threshold).map_err(tag("regime"))?;
    let shocks = regime::detect_shocks(&bullish.bu, cfg.regime.shock);
    let mut table = Table::new(["month", "b", "bu", "peak", "trough"]);
    let mut fig = Table::new(["month", "bu"]);
    for i in 0..bullish.len() {
        let m = bullish.months[i].to_string();
        table.push(vec![
            m.clone(),
            num(bullish.b[i]),
            opt(bullish.bu[i]),
            output::flag(shocks.peak[i]),
            output::flag(shocks.trough[i]),
        ]);
        fig.push(vec![m, opt(bullish.bu[i])]);
    }
    let mut shading = Table::new(["start", "end"]);
    for (a, b) in d.calendar.intervals() {
        shading.push(vec![a.to_string(), b.to_string()]);
    }
    out.table("regime.csv", &table)?;
    out.table("fig2_bullish.csv", &fig)?;
    out.table("recession_shading.csv", &shading)?;
    Ok((bullish, shocks))
}

fn predictor_stage(
    cfg: &PipelineConfig,
    d: &Data,
    out: &mut OutputDir,
) -> Result<Sample, PipelineError> {
    let macros = predictors::build_macro(&d.panel, &d.premium).map_err(tag("predictors"))?;
    let tech = predictors::build_technical(&d.daily, cfg.predictors.ma_convention)
        .map_err(tag("predictors"))?;
    let panel = PredictorPanel::assemble(&macros, &tech).map_err(tag("predictors"))?;

    let mut header = vec!["month"];
    header.extend(PredictorPanel::names());
    let mut table = Table::new(header);
    let cols: Vec<&Vec<f64>> = panel.columns().collect();
    for (i, m) in panel.months.iter().enumerate() {
        let mut row = vec![m.to_string()];
        row.extend(cols.iter().map(|c| num(c[i])));
        table.push(row);
    }
    out.table("predictors.csv", &table)?;

    let first = YearMonth::of(d.daily.dates()[0]);
    let last = YearMonth::of(d.daily.dates()[d.daily.len() - 1]);
    let inside = |m: &YearMonth| (first..=last).contains(m);
    let mut span = vec![(
        "premium_pct",
        d.premium
            .months
            .iter()
            .zip(&d.premium.values)
            .filter(|(m, _)| inside(m))
            .map(|(_, v)| *v)
            .collect(),
    )];
    for (name, col) in MACRO_NAMES.iter().zip(&macros.columns) {
        let v = macros
            .months
            .iter()
            .zip(col)
            .filter(|(m, _)| inside(m))
            .filter_map(|(_, v)| *v)
            .collect();
        span.push((name, v));
    }

    let rf_col = d.panel.column("Rfree").map_err(tag("macro"))?;
    let mut s = Sample {
        months: Vec::new(),
        y: Vec::new(),
        rf: Vec::new(),
        cols: vec![Vec::new(); cols.len()],
        span,
    };
    for (i, m) in panel.months.iter().enumerate() {
        let (Some(p), Ok(r)) = (d.premium.position(*m), d.panel.months().binary_search(m)) else {
            continue;
        };
        if let Some(prev) = s.months.last() {
            if prev.next() != *m {
                return Err(PipelineError::new(
                    "predictors",
                    format!("aligned sample has a gap between {prev} and {m}"),
                ));
            }
        }
        s.months.push(*m);
        s.y.push(d.premium.values[p]);
        s.rf.push(rf_col[r]);
        for (dst, src) in s.cols.iter_mut().zip(&cols) {
            dst.push(src[i]);
        }
    }
    if s.len() < MIN_ESTIMATION_WINDOW + 2 {
        return Err(PipelineError::new(
            "predictors",
            format!(
                "aligned sample has {} months; at least {} are needed",
                s.len(),
                MIN_ESTIMATION_WINDOW + 2
            ),
        ));
    }
    Ok(s)
}

/// Peak and trough windows computed on the Bullish timeline, read at
/// `months`; months off the timeline fall outside every window.
fn masks_at(
    windows: &RegimeMasks,
    bullish: &BullishSeries,
    months: &[YearMonth],
    calendar: &RecessionCalendar,
) -> RegimeMasks {
    let pos: Vec<Option<usize>> = months.iter().map(|m| bullish.position(*m)).collect();
    let pick = |v: &[bool]| {
        pos.iter()
            .map(|p| p.is_some_and(|i| v[i]))
            .collect::<Vec<_>>()
    };
    RegimeMasks::from_windows(pick(&windows.peak), pick(&windows.trough))
        .with_calendar(months, calendar)
}

fn mask_names() -> Vec<&'static str> {
    RegimeMasks::from_windows(vec![], vec![])
        .named()
        .iter()
        .map(|(n, _)| *n)
        .collect()
}

fn pct(v: Option<f64>) -> String {
    opt(v.map(|x| 100.0 * x))
}

/// Model identifiers in output order: the 28 predictors then the PC groups.
fn model_ids() -> Vec<(String, &'static str)> {
    let mut ids: Vec<(String, &'static str)> = MACRO_NAMES
        .iter()
        .map(|n| (n.to_string(), "econ"))
        .collect();
    ids.extend(TECH_NAMES.iter().map(|n| (n.to_string(), "tech")));
    ids.extend(Group::ALL.iter().map(|g| (g.label().to_string(), "pc")));
    ids
}

fn varying<'a>(cols: &[&'a [f64]]) -> Vec<&'a [f64]> {
    cols.iter()
        .copied()
        .filter(|c| c.iter().any(|v| *v != c[0]))
        .collect()
}

fn insample_stage(
    cfg: &PipelineConfig,
    d: &Data,
    s: &Sample,
    bullish: &BullishSeries,
    shocks: &Shocks,
    out: &mut OutputDir,
) -> Result<(), PipelineError> {
    let n = s.len();
    let y = &s.y[1..];
    let windows = regime::insample_masks(
        shocks,
        cfg.regime.insample_before,
        cfg.regime.insample_after,
    );
    let masks = masks_at(&windows, bullish, &s.months[1..], &d.calendar);
    let reps = cfg.bootstrap.replications;
    let ids = model_ids();

    let rows: Vec<Vec<String>> = (0..ids.len())
        .into_par_iter()
        .map(|k| {
            let seed = stats::derive_seed(cfg.seed, BOOTSTRAP_PURPOSE, k as u64);
            // (fit, regressor driving the bootstrap, chosen K)
            let model = if k < s.cols.len() {
                let x = &s.cols[k][..n - 1];
                regress::ols_fit(y, &[x])
                    .ok()
                    .map(|fit| (fit, x.to_vec(), 1))
            } else {
                let g = Group::ALL[k - s.cols.len()];
                let block: Vec<&[f64]> = s.group(g).iter().map(|c| &c[..n - 1]).collect();
                let block = varying(&block);
                regress::pc_regression(y, &block, cfg.oos.k_max)
                    .ok()
                    .map(|pr| {
                        let k = pr.fit.slopes().len();
                        let score = pr.pca.scores(&block, n - 1).swap_remove(0);
                        (pr.fit, score, k)
                    })
            };
            let (name, group) = &ids[k];
            let mut row = vec![name.clone(), group.to_string()];
            match model {
                Some((fit, x, kk)) => {
                    let t = regress::hac_tstats(&fit, None).ok().map(|t| t[1]);
                    let p = regress::wild_bootstrap_pvalue(y, &x, reps, seed).ok();
                    row.extend([
                        kk.to_string(),
                        num(fit.slopes()[0]),
                        opt(t),
                        opt(p),
                        evaluate::stars(p).to_string(),
                        num(100.0 * fit.r2),
                    ]);
                    for (_, m) in masks.named() {
                        row.push(pct(evaluate::conditional_r2(y, &fit.fitted, m)));
                    }
                }
                None => {
                    row.extend(std::iter::repeat_n(NA.to_string(), 6 + 6));
                    row[6] = String::new();
                }
            }
            row
        })
        .collect();

    let mut header = vec![
        "predictor".to_string(),
        "group".into(),
        "k".into(),
        "slope".into(),
        "t_stat".into(),
        "p_value".into(),
        "stars".into(),
        "r2_pct".into(),
    ];
    header.extend(mask_names().iter().map(|m| format!("r2_{m}_pct")));
    let mut table = Table::new(header);
    rows.into_iter().for_each(|r| table.push(r));
    out.table("insample.csv", &table)
}

fn oos_stage(
    cfg: &PipelineConfig,
    d: &Data,
    s: &Sample,
    bullish: &BullishSeries,
    shocks: &Shocks,
    out: &mut OutputDir,
) -> Result<Vec<ForecastSet>, PipelineError> {
    let start = s
        .months
        .iter()
        .position(|m| *m == cfg.oos.start)
        .ok_or_else(|| {
            PipelineError::new(
                "oos",
                format!(
                    "oos.start {} is outside the aligned sample {}..{}",
                    cfg.oos.start,
                    s.months[0],
                    s.months[s.len() - 1]
                ),
            )
        })?;
    let ids = model_ids();
    let sets: Vec<ForecastSet> = (0..ids.len())
        .into_par_iter()
        .map(|k| {
            let id = &ids[k].0;
            if k < s.cols.len() {
                evaluate::recursive_forecast(id, &s.months, &s.y, &s.cols[k], start)
            } else {
                let g = Group::ALL[k - s.cols.len()];
                evaluate::recursive_pc_forecast(
                    id,
                    &s.months,
                    &s.y,
                    &s.group(g),
                    start,
                    cfg.oos.k_max,
                )
            }
        })
        .collect::<Result<_, _>>()
        .map_err(tag("oos"))?;

    let windows = regime::oos_masks(shocks, cfg.regime.oos_horizon);
    let masks = masks_at(&windows, bullish, &sets[0].months, &d.calendar);
    let all = vec![true; sets[0].len()];
    let mut header: Vec<String> = [
        "model",
        "group",
        "months",
        "fallbacks",
        "r2os_pct",
        "cw_stat",
        "cw_p",
        "stars",
    ]
    .map(String::from)
    .to_vec();
    for m in mask_names() {
        header.push(format!("r2os_{m}_pct"));
        header.push(format!("cw_{m}_p"));
    }
    let mut table = Table::new(header);
    for (fs, (_, group)) in sets.iter().zip(&ids) {
        let cw = evaluate::clark_west(fs, &all);
        let p = cw.map(|c| c.p_value);
        let mut row = vec![
            fs.id.clone(),
            group.to_string(),
            fs.len().to_string(),
            fs.fallbacks.to_string(),
            pct(evaluate::r2_os(fs, &all)),
            opt(cw.map(|c| c.statistic)),
            opt(p),
            evaluate::stars(p).to_string(),
        ];
        for (_, m) in masks.named() {
            row.push(pct(evaluate::r2_os(fs, m)));
            row.push(opt(evaluate::clark_west(fs, m).map(|c| c.p_value)));
        }
        table.push(row);
    }
    out.table("oos.csv", &table)?;
    Ok(sets)
}

/// Model and HA tracks of every model at the holding cost, in forecast-set
/// order, shared with the report.
struct CostTracks(Vec<(String, PortfolioTrack, PortfolioTrack)>);

fn and(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}

#[allow(clippy::too_many_arguments)]
fn allocate_stage(
    cfg: &PipelineConfig,
    opts: &RunOptions,
    d: &Data,
    s: &Sample,
    bullish: &BullishSeries,
    shocks: &Shocks,
    sets: &[ForecastSet],
    out: &mut OutputDir,
) -> Result<CostTracks, PipelineError> {
    let months = &sets[0].months;
    let base: Vec<bool> = months
        .iter()
        .map(|m| opts.mask.keeps(*m, d.calendar.contains(*m)))
        .collect();
    let windows = regime::oos_masks(shocks, cfg.regime.oos_horizon);
    let masks = masks_at(&windows, bullish, months, &d.calendar);
    let kappa = cfg.allocation.kappa;
    let mut costs = vec![cfg.allocation.cost_bps];
    if cfg.holding.cost_bps != cfg.allocation.cost_bps {
        costs.push(cfg.holding.cost_bps);
    }

    let mut header: Vec<String> = [
        "model",
        "group",
        "cost_bps",
        "kappa",
        "mean_weight",
        "turnover",
        "cer_pct",
        "cer_ha_pct",
        "cer_gain_pct",
    ]
    .map(String::from)
    .to_vec();
    header.extend(mask_names().iter().map(|m| format!("cer_gain_{m}_pct")));
    let mut table = Table::new(header);
    let ids = model_ids();
    let mut at_holding = Vec::new();
    for &cost in &costs {
        let acfg = cfg.allocation.with_cost(cost);
        let tracks: Vec<(PortfolioTrack, PortfolioTrack)> = sets
            .par_iter()
            .map(|fs| allocate::backtest_pair(fs, &s.y, &s.rf, &s.months, &acfg))
            .collect::<Result<_, _>>()
            .map_err(tag("allocate"))?;
        for ((fs, (_, group)), (model, ha)) in sets.iter().zip(&ids).zip(tracks) {
            let kept: Vec<f64> = model
                .weights
                .iter()
                .zip(&base)
                .filter(|(_, b)| **b)
                .map(|(w, _)| *w)
                .collect();
            let annual =
                |t: &PortfolioTrack| allocate::cer(&t.net, kappa, &base).map(|c| 1200.0 * c);
            let mut row = vec![
                fs.id.clone(),
                group.to_string(),
                num(cost),
                num(kappa),
                if kept.is_empty() {
                    NA.to_string()
                } else {
                    num(stats::mean(&kept))
                },
                num(model.turnover.last().copied().unwrap_or(0.0)),
                opt(annual(&model)),
                opt(annual(&ha)),
                opt(allocate::cer_gain(&model, &ha, kappa, &base)),
            ];
            for (_, m) in masks.named() {
                row.push(opt(allocate::cer_gain(&model, &ha, kappa, &and(m, &base))));
            }
            table.push(row);
            if cost == cfg.holding.cost_bps {
                at_holding.push((fs.id.clone(), model, ha));
            }
        }
    }
    out.table("allocation.csv", &table)?;

    let pc: Vec<_> = at_holding[s.cols.len()..].to_vec();
    let positions: Vec<Option<usize>> = months.iter().map(|m| bullish.position(*m)).collect();
    let cells = allocate::holding_period_grid(
        &pc,
        shocks,
        &positions,
        &HOLDING_BUCKETS,
        kappa,
        Some(&base),
    );
    let mut holding = Table::new(["model", "regime", "holding", "from", "to", "cer_gain_pct"]);
    for c in cells {
        holding.push(vec![
            c.model,
            c.regime.to_string(),
            format!("G{}-G{}", c.from, c.to),
            c.from.to_string(),
            c.to.to_string(),
            opt(c.cer_gain),
        ]);
    }
    out.table("holding_periods.csv", &holding)?;

    let horizons: Vec<(i64, i64)> = (1..=12).map(|h| (1, h)).collect();
    let mut fig = Table::new(["holding", "model", "regime", "cer_gain"]);
    let mut cells =
        allocate::holding_period_grid(&pc, shocks, &positions, &horizons, kappa, Some(&base));
    cells.sort_by_key(|c| c.to);
    for c in cells {
        fig.push(vec![
            c.to.to_string(),
            c.model,
            c.regime.to_string(),
            opt(c.cer_gain),
        ]);
    }
    out.table("fig3_cer_by_holding.csv", &fig)?;
    Ok(CostTracks(at_holding))
}

fn summary_row(t: &mut Table, name: &str, x: &[f64]) {
    if x.len() < 2 {
        let mut row = vec![name.to_string(), x.len().to_string()];
        row.extend(std::iter::repeat_n(NA.to_string(), 5));
        t.push(row);
        return;
    }
    let s = stats::summarize(x);
    t.push(vec![
        name.to_string(),
        x.len().to_string(),
        num(s.mean),
        num(s.std),
        num(s.min),
        num(s.max),
        num(s.autocorr),
    ]);
}

/// Mean of the defined daily local exponents in each month.
fn monthly_mean_h(hs: &HurstSeries) -> BTreeMap<YearMonth, f64> {
    let mut acc: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
    for (d, h) in hs.defined() {
        let e = acc.entry(YearMonth::of(d)).or_default();
        e.0 += h;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(m, (s, n))| (m, s / n as f64))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn robustness_rows(
    table: &mut Table,
    check: &str,
    fs: &ForecastSet,
    model: &PortfolioTrack,
    ha: &PortfolioTrack,
    masks: &RegimeMasks,
    base: &[bool],
    kappa: f64,
) {
    let regimes = [
        ("all", base.to_vec()),
        ("stable_plus", and(&masks.stable_plus, base)),
        ("bu_plus", and(&masks.peak, base)),
        ("stable_minus", and(&masks.stable_minus, base)),
        ("bu_minus", and(&masks.trough, base)),
    ];
    for (regime, m) in regimes {
        let cw = evaluate::clark_west(fs, &m);
        table.push(vec![
            check.to_string(),
            fs.id.clone(),
            regime.to_string(),
            m.iter().filter(|v| **v).count().to_string(),
            pct(evaluate::r2_os(fs, &m)),
            opt(cw.map(|c| c.statistic)),
            opt(cw.map(|c| c.p_value)),
            opt(allocate::cer_gain(model, ha, kappa, &m)),
        ]);
    }
}

#[allow(clippy::too_many_arguments)]
fn report_stage(
    cfg: &PipelineConfig,
    d: &Data,
    s: &Sample,
    hs: &HurstSeries,
    bullish: &BullishSeries,
    sets: &[ForecastSet],
    tracks: &CostTracks,
    out: &mut OutputDir,
) -> Result<(), PipelineError> {
    let mut summary = Table::new(["variable", "n", "mean", "std", "min", "max", "autocorr"]);
    let ret: Vec<f64> = d.returns.values.iter().map(|r| 100.0 * r).collect();
    summary_row(&mut summary, "return_pct", &ret);
    summary_row(
        &mut summary,
        "local_h",
        &hs.h.iter().flatten().copied().collect::<Vec<_>>(),
    );
    summary_row(&mut summary, "bullish_ratio", &bullish.b);
    summary_row(
        &mut summary,
        "bullish_index",
        &bullish.bu.iter().flatten().copied().collect::<Vec<_>>(),
    );
    for (name, col) in &s.span {
        summary_row(&mut summary, name, col);
    }
    out.table("summary_stats.csv", &summary)?;

    let months = &sets[0].months;
    let n = months.len();
    let kappa = cfg.allocation.kappa;
    let rb = &cfg.robustness;
    let fixed = regime::oos_masks(
        &regime::detect_shocks(&bullish.bu, cfg.regime.shock),
        cfg.regime.oos_horizon,
    );
    let fixed = masks_at(&fixed, bullish, months, &d.calendar);
    let trim_rule = ShockRule::TrimmedQuantile {
        trim: rb.trim,
        q: rb.trim_q,
    };
    trim_rule.validate().map_err(tag("report"))?;
    let trimmed = regime::oos_masks(
        &regime::detect_shocks(&bullish.bu, trim_rule),
        cfg.regime.oos_horizon,
    );
    let trimmed = masks_at(&trimmed, bullish, months, &d.calendar);
    let mean_h = monthly_mean_h(hs);

    let mut checks: Vec<(String, &RegimeMasks, Vec<bool>)> = vec![
        ("baseline".into(), &fixed, vec![true; n]),
        ("exclude_recession".into(), &fixed, fixed.expansion.clone()),
        (
            format!("before_{}", rb.subsample_split),
            &fixed,
            months.iter().map(|m| *m < rb.subsample_split).collect(),
        ),
        (
            format!("from_{}", rb.subsample_split),
            &fixed,
            months.iter().map(|m| *m >= rb.subsample_split).collect(),
        ),
        ("trimmed_quantile".into(), &trimmed, vec![true; n]),
    ];
    for &thr in &rb.hurst_thresholds {
        let above: Vec<Option<bool>> = months
            .iter()
            .map(|m| mean_h.get(m).map(|h| *h > thr))
            .collect();
        checks.push((
            format!("h_above_{thr}"),
            &fixed,
            above.iter().map(|a| *a == Some(true)).collect(),
        ));
        checks.push((
            format!("h_at_or_below_{thr}"),
            &fixed,
            above.iter().map(|a| *a == Some(false)).collect(),
        ));
    }

    let mut table = Table::new([
        "check",
        "model",
        "regime",
        "months",
        "r2os_pct",
        "cw_stat",
        "cw_p",
        "cer_gain_pct",
    ]);
    for (check, masks, base) in &checks {
        for (fs, (_, model, ha)) in sets.iter().zip(&tracks.0) {
            robustness_rows(&mut table, check, fs, model, ha, masks, base, kappa);
        }
    }
    out.table("robustness.csv", &table)
}
