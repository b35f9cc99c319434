//! Ingestion of daily index prices, the monthly macro panel and the
//! recession calendar, plus the return series derived from them.
//!
//! Units: daily returns are natural-log units; the monthly equity premium is
//! stored in percent. Macro columns keep the units of the source file
//! (yields and rates as fractions).

mod month;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use month::{ParseYearMonthError, YearMonth};

#[derive(Debug, thiserror::Error)]
pub enum MarketDataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T, E = MarketDataError> = std::result::Result<T, E>;

/// Header of the daily price file.
pub const DAILY_HEADER: [&str; 3] = ["date", "close", "volume"];

/// Raw macro columns required from the monthly panel (Goyal file names).
pub const MACRO_COLUMNS: [&str; 13] = [
    "Index", "D12", "E12", "bm", "tbl", "AAA", "BAA", "lty", "ntis", "Rfree", "infl", "ltr",
    "corpr",
];

/// Daily closing prices with optional volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
    volume: Vec<Option<f64>>,
}

impl DailySeries {
    pub fn new(dates: Vec<NaiveDate>, close: Vec<f64>, volume: Vec<Option<f64>>) -> Result<Self> {
        if dates.len() != close.len() || dates.len() != volume.len() {
            return Err(MarketDataError::Validation(
                "dates, closes and volumes differ in length".into(),
            ));
        }
        if dates.len() < 2 {
            return Err(MarketDataError::InsufficientData(
                "a daily series needs at least two rows".into(),
            ));
        }
        for w in dates.windows(2) {
            if w[1] == w[0] {
                return Err(MarketDataError::Validation(format!(
                    "duplicate date {}",
                    w[0]
                )));
            }
            if w[1] < w[0] {
                return Err(MarketDataError::Validation(format!(
                    "dates out of order: {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if let Some(i) = close.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(MarketDataError::Validation(format!(
                "non-positive close {} on {}",
                close[i], dates[i]
            )));
        }
        if let Some(i) = volume
            .iter()
            .position(|v| v.is_some_and(|v| !(v >= 0.0 && v.is_finite())))
        {
            return Err(MarketDataError::Validation(format!(
                "negative volume on {}",
                dates[i]
            )));
        }
        Ok(Self {
            dates,
            close,
            volume,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn volume(&self) -> &[Option<f64>] {
        &self.volume
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Last close of each calendar month.
    pub fn monthly_close(&self) -> Vec<(YearMonth, f64)> {
        let mut out: Vec<(YearMonth, f64)> = Vec::new();
        for (d, &p) in self.dates.iter().zip(&self.close) {
            let m = YearMonth::of(*d);
            match out.last_mut() {
                Some((last, v)) if *last == m => *v = p,
                _ => out.push((m, p)),
            }
        }
        out
    }

    /// Sum of daily volumes per calendar month; `None` when any day of the
    /// month has no volume.
    pub fn monthly_volume(&self) -> Vec<(YearMonth, Option<f64>)> {
        let mut out: Vec<(YearMonth, Option<f64>)> = Vec::new();
        for (d, v) in self.dates.iter().zip(&self.volume) {
            let m = YearMonth::of(*d);
            match out.last_mut() {
                Some((last, acc)) if *last == m => *acc = acc.zip(*v).map(|(a, b)| a + b),
                _ => out.push((m, *v)),
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| MarketDataError::Validation(e.to_string());
        wr.write_record(DAILY_HEADER).map_err(io)?;
        for i in 0..self.len() {
            let vol = self.volume[i].map(|v| v.to_string()).unwrap_or_default();
            wr.write_record([self.dates[i].to_string(), self.close[i].to_string(), vol])
                .map_err(io)?;
        }
        wr.flush()
            .map_err(|e| MarketDataError::Validation(e.to_string()))
    }
}

/// Dated log returns. Unit depends on the producer (see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(MarketDataError::Validation(
                "return dates and values differ in length".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MarketDataError::Validation("non-finite return".into()));
        }
        Ok(Self { dates, values })
    }

    /// Attaches consecutive calendar days starting 2000-01-01; used for
    /// synthetic series that have no natural dates.
    pub fn with_daily_index(values: Vec<f64>) -> Self {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..values.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        Self { dates, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dates: self.dates.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `values[i] = ln(close[i+1] / close[i])`, dated at the later day.
pub fn daily_log_returns(prices: &DailySeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(MarketDataError::InsufficientData(
            "log returns need at least two prices".into(),
        ));
    }
    let values = prices
        .close
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    Ok(ReturnSeries {
        dates: prices.dates[1..].to_vec(),
        values,
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_number(field: &str, line: u64, what: &str) -> Result<f64> {
    let cleaned: String = field.trim().chars().filter(|&c| c != ',').collect();
    cleaned.parse::<f64>().map_err(|_| MarketDataError::Parse {
        line,
        message: format!("invalid {what} `{field}`"),
    })
}

fn csv_error(e: csv::Error) -> MarketDataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    MarketDataError::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn load_daily_prices(path: impl AsRef<Path>) -> Result<DailySeries> {
    read_daily_prices(open(path.as_ref())?)
}

pub fn read_daily_prices<R: Read>(reader: R) -> Result<DailySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let idx = |name: &str| header.iter().position(|h| h == name);
    let date_i = idx("date").ok_or_else(|| MarketDataError::MissingColumn("date".into()))?;
    let close_i = idx("close").ok_or_else(|| MarketDataError::MissingColumn("close".into()))?;
    let vol_i = idx("volume");

    let (mut dates, mut close, mut volume) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_i), "%Y-%m-%d").map_err(|_| {
            MarketDataError::Parse {
                line,
                message: format!("invalid date `{}`", field(date_i)),
            }
        })?;
        let price = parse_number(field(close_i), line, "close")?;
        if !(price > 0.0) {
            return Err(MarketDataError::Validation(format!(
                "line {line}: non-positive close {price} on {date}"
            )));
        }
        let vol = match vol_i.map(field) {
            None | Some("") => None,
            Some(v) => Some(parse_number(v, line, "volume")?),
        };
        dates.push(date);
        close.push(price);
        volume.push(vol);
    }
    DailySeries::new(dates, close, volume)
}

/// Monthly macro panel keyed by year-month. Only the columns in
/// [`MACRO_COLUMNS`] are retained.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroPanel {
    months: Vec<YearMonth>,
    columns: BTreeMap<String, Vec<f64>>,
}

impl MacroPanel {
    pub fn new(months: Vec<YearMonth>, columns: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        for w in months.windows(2) {
            if w[1] <= w[0] {
                return Err(MarketDataError::Validation(format!(
                    "months not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        for (name, col) in &columns {
            if col.len() != months.len() {
                return Err(MarketDataError::Validation(format!(
                    "column `{name}` has {} rows, expected {}",
                    col.len(),
                    months.len()
                )));
            }
        }
        Ok(Self { months, columns })
    }

    pub fn months(&self) -> &[YearMonth] {
        &self.months
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }
}

pub fn load_macro_panel(path: impl AsRef<Path>) -> Result<MacroPanel> {
    read_macro_panel(open(path.as_ref())?)
}

pub fn read_macro_panel<R: Read>(reader: R) -> Result<MacroPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let key_i = header
        .iter()
        .position(|h| h == "yyyymm")
        .ok_or_else(|| MarketDataError::MissingColumn("yyyymm".into()))?;
    let mut wanted = Vec::with_capacity(MACRO_COLUMNS.len());
    for name in MACRO_COLUMNS {
        let i = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MarketDataError::MissingColumn(name.into()))?;
        wanted.push((name, i));
    }

    let mut months = Vec::new();
    let mut columns: BTreeMap<String, Vec<f64>> = MACRO_COLUMNS
        .iter()
        .map(|c| (c.to_string(), Vec::new()))
        .collect();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let key = rec.get(key_i).unwrap_or("");
        let month: YearMonth = key.parse().map_err(|_| MarketDataError::Parse {
            line,
            message: format!("invalid month key `{key}`"),
        })?;
        if let Some(&prev) = months.last() {
            if month == prev {
                return Err(MarketDataError::Validation(format!(
                    "duplicate month {month}"
                )));
            }
        }
        for &(name, i) in &wanted {
            let raw = rec.get(i).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(MarketDataError::Parse {
                    line,
                    message: format!("missing value for `{name}` in {month}"),
                });
            }
            let v = parse_number(raw, line, name)?;
            columns.get_mut(name).expect("column initialised").push(v);
        }
        months.push(month);
    }
    MacroPanel::new(months, columns)
}

/// Whether the monthly index return includes dividends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumConvention {
    /// `(Index_t + D12_t / 12) / Index_{t-1}`, the Goyal total-return construction.
    #[default]
    TotalReturn,
    /// `Index_t / Index_{t-1}`.
    PriceOnly,
}

/// Monthly log equity premium, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumSeries {
    pub months: Vec<YearMonth>,
    pub values: Vec<f64>,
}

impl PremiumSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn position(&self, month: YearMonth) -> Option<usize> {
        self.months.binary_search(&month).ok()
    }
}

/// `100 * (ln(gross index return) - ln(1 + Rfree_t))`, starting at the
/// second panel month.
pub fn monthly_equity_premium(
    panel: &MacroPanel,
    convention: PremiumConvention,
) -> Result<PremiumSeries> {
    let index = panel.column("Index")?;
    let rf = panel.column("Rfree")?;
    let d12 = match convention {
        PremiumConvention::TotalReturn => Some(panel.column("D12")?),
        PremiumConvention::PriceOnly => None,
    };
    if panel.len() < 2 {
        return Err(MarketDataError::InsufficientData(
            "the premium needs at least two months".into(),
        ));
    }
    let mut values = Vec::with_capacity(panel.len() - 1);
    for t in 1..panel.len() {
        let top = index[t] + d12.map_or(0.0, |d| d[t] / 12.0);
        let gross = top / index[t - 1];
        if !(gross > 0.0) || !(1.0 + rf[t] > 0.0) {
            return Err(MarketDataError::Validation(format!(
                "non-positive gross return in {}",
                panel.months()[t]
            )));
        }
        values.push(100.0 * (gross.ln() - rf[t].ln_1p()));
    }
    Ok(PremiumSeries {
        months: panel.months()[1..].to_vec(),
        values,
    })
}

/// Inclusive recession intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecessionCalendar {
    intervals: Vec<(YearMonth, YearMonth)>,
}

impl RecessionCalendar {
    pub fn new(intervals: Vec<(YearMonth, YearMonth)>) -> Result<Self> {
        for &(s, e) in &intervals {
            if s > e {
                return Err(MarketDataError::Validation(format!(
                    "recession interval {s}..{e} is inverted"
                )));
            }
        }
        for w in intervals.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(MarketDataError::Validation(format!(
                    "recession intervals {}..{} and {}..{} overlap or are unordered",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[(YearMonth, YearMonth)] {
        &self.intervals
    }

    pub fn contains(&self, month: YearMonth) -> bool {
        self.intervals
            .iter()
            .any(|&(s, e)| s <= month && month <= e)
    }

    pub fn mask(&self, months: &[YearMonth]) -> Vec<bool> {
        months.iter().map(|&m| self.contains(m)).collect()
    }
}

pub fn load_recessions(path: impl AsRef<Path>) -> Result<RecessionCalendar> {
    read_recessions(open(path.as_ref())?)
}

pub fn read_recessions<R: Read>(reader: R) -> Result<RecessionCalendar> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut intervals = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let parse = |i: usize| -> Result<YearMonth> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse().map_err(|_| MarketDataError::Parse {
                line,
                message: format!("invalid month `{raw}`"),
            })
        };
        intervals.push((parse(0)?, parse(1)?));
    }
    RecessionCalendar::new(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn panel(index: &[f64], rf: &[f64], d12: &[f64]) -> MacroPanel {
        let months: Vec<YearMonth> = (0..index.len())
            .map(|i| YearMonth::new(2000, 1).unwrap().offset(i as i64))
            .collect();
        let mut cols = BTreeMap::new();
        cols.insert("Index".to_string(), index.to_vec());
        cols.insert("Rfree".to_string(), rf.to_vec());
        cols.insert("D12".to_string(), d12.to_vec());
        MacroPanel::new(months, cols).unwrap()
    }

    #[test]
    fn parses_two_rows() {
        let csv = "date,close,volume\n2020-01-02,100.0,\n2020-01-03,101.0,5\n";
        let s = read_daily_prices(csv.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.volume(), &[None, Some(5.0)]);
    }

    #[test]
    fn rejects_negative_close() {
        let csv = "date,close,volume\n2020-01-02,100.0,\n2020-01-03,-1,\n";
        let err = read_daily_prices(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, MarketDataError::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_duplicate_dates_naming_the_date() {
        let csv = "date,close,volume\n2020-01-02,100.0,\n2020-01-02,101.0,\n";
        let err = read_daily_prices(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("2020-01-02"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "date,close,volume\n2020-01-02,100.0,\n2020-01-03,abc,\n";
        match read_daily_prices(csv.as_bytes()).unwrap_err() {
            MarketDataError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unordered_dates_rejected() {
        let csv = "date,close\n2020-01-03,100.0\n2020-01-02,101.0\n";
        assert!(matches!(
            read_daily_prices(csv.as_bytes()).unwrap_err(),
            MarketDataError::Validation(_)
        ));
    }

    #[test]
    fn log_return_examples() {
        let mk = |c: Vec<f64>| {
            let dates = (0..c.len())
                .map(|i| date("2020-01-01") + chrono::Days::new(i as u64))
                .collect();
            let n = c.len();
            DailySeries::new(dates, c, vec![None; n]).unwrap()
        };
        assert_eq!(
            daily_log_returns(&mk(vec![100.0, 100.0])).unwrap().values,
            vec![0.0]
        );
        let r = daily_log_returns(&mk(vec![1.0, 2.0, 4.0])).unwrap().values;
        assert_eq!(r, vec![2f64.ln(), 2f64.ln()]);
        let r = daily_log_returns(&mk(vec![100.0, 100.0 * std::f64::consts::E]))
            .unwrap()
            .values;
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_row_is_insufficient() {
        let r = DailySeries::new(vec![date("2020-01-01")], vec![1.0], vec![None]);
        assert!(matches!(
            r.unwrap_err(),
            MarketDataError::InsufficientData(_)
        ));
    }

    #[test]
    fn premium_examples() {
        let p = panel(&[100.0, 100.0, 100.0], &[0.0; 3], &[0.0; 3]);
        let e = monthly_equity_premium(&p, PremiumConvention::PriceOnly).unwrap();
        assert_eq!(e.values, vec![0.0, 0.0]);
        let p = panel(&[100.0, 200.0], &[0.0; 2], &[0.0; 2]);
        let e = monthly_equity_premium(&p, PremiumConvention::PriceOnly).unwrap();
        assert!((e.values[0] - 100.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(e.months, vec![YearMonth::new(2000, 2).unwrap()]);
    }

    #[test]
    fn total_return_adds_monthly_dividend() {
        let p = panel(&[100.0, 100.0], &[0.0; 2], &[12.0, 12.0]);
        let e = monthly_equity_premium(&p, PremiumConvention::TotalReturn).unwrap();
        assert!((e.values[0] - 100.0 * 1.01f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn missing_premium_column_is_schema_error() {
        let months = vec![
            YearMonth::new(2000, 1).unwrap(),
            YearMonth::new(2000, 2).unwrap(),
        ];
        let p = MacroPanel::new(months, BTreeMap::new()).unwrap();
        assert!(matches!(
            monthly_equity_premium(&p, PremiumConvention::PriceOnly).unwrap_err(),
            MarketDataError::MissingColumn(_)
        ));
    }

    #[test]
    fn macro_panel_rejects_na_and_duplicates() {
        let header = "yyyymm,Index,D12,E12,bm,tbl,AAA,BAA,lty,ntis,Rfree,infl,ltr,corpr,csp\n";
        let row =
            |m: &str, idx: &str| format!("{m},{idx},1,1,1,1,1,1,1,1,0.001,0.01,0.01,0.01,NA\n");
        let ok = format!(
            "{header}{}{}",
            row("195012", "\"1,000.5\""),
            row("195101", "20")
        );
        let p = read_macro_panel(ok.as_bytes()).unwrap();
        assert_eq!(p.column("Index").unwrap(), &[1000.5, 20.0]);
        let dup = format!("{header}{}{}", row("195012", "1"), row("195012", "2"));
        assert!(read_macro_panel(dup.as_bytes()).is_err());
        let na = format!("{header}{}", row("195012", "NA"));
        assert!(matches!(
            read_macro_panel(na.as_bytes()).unwrap_err(),
            MarketDataError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn recession_examples() {
        let c = read_recessions("start,end\n2007-12,2009-06\n".as_bytes()).unwrap();
        assert_eq!(c.intervals().len(), 1);
        assert!(c.contains(YearMonth::new(2008, 5).unwrap()));
        assert!(!c.contains(YearMonth::new(2009, 7).unwrap()));
        let overlap = "start,end\n2001-03,2001-11\n2001-06,2002-01\n";
        assert!(matches!(
            read_recessions(overlap.as_bytes()).unwrap_err(),
            MarketDataError::Validation(_)
        ));
        let inverted = "start,end\n2001-11,2001-03\n";
        assert!(read_recessions(inverted.as_bytes()).is_err());
        let empty = read_recessions("start,end\n".as_bytes()).unwrap();
        assert!(empty.intervals().is_empty());
        assert!(empty
            .mask(&[YearMonth::new(2001, 1).unwrap()])
            .iter()
            .all(|r| !r));
    }

    #[test]
    fn monthly_volume_requires_every_day() {
        let dates = vec![date("2020-01-30"), date("2020-01-31"), date("2020-02-03")];
        let s =
            DailySeries::new(dates, vec![1.0, 2.0, 3.0], vec![Some(1.0), None, Some(4.0)]).unwrap();
        assert_eq!(
            s.monthly_volume(),
            vec![
                (YearMonth::new(2020, 1).unwrap(), None),
                (YearMonth::new(2020, 2).unwrap(), Some(4.0))
            ]
        );
        assert_eq!(s.monthly_close()[0].1, 2.0);
    }

    fn arb_daily() -> impl Strategy<Value = DailySeries> {
        prop::collection::vec(
            (1e-3f64..1e6, prop::option::of(0.0f64..1e12), 1u64..5),
            2..40,
        )
        .prop_map(|rows| {
            let mut d = date("1990-01-01");
            let (mut dates, mut close, mut vol) = (vec![], vec![], vec![]);
            for (p, v, gap) in rows {
                d = d + chrono::Days::new(gap);
                dates.push(d);
                close.push(p);
                vol.push(v);
            }
            DailySeries::new(dates, close, vol).unwrap()
        })
    }

    proptest! {
        #[test]
        fn daily_csv_round_trip(s in arb_daily()) {
            let mut buf = Vec::new();
            s.write_csv(&mut buf).unwrap();
            let back = read_daily_prices(buf.as_slice()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn daily_returns_telescope_to_month_end(s in arb_daily()) {
            let r = daily_log_returns(&s).unwrap();
            let closes = s.monthly_close();
            for w in closes.windows(2) {
                let (m, end) = w[1];
                let start = w[0].1;
                let sum: f64 = r.dates.iter().zip(&r.values)
                    .filter(|(d, _)| YearMonth::of(**d) == m)
                    .map(|(_, v)| v)
                    .sum();
                prop_assert!((sum - (end / start).ln()).abs() < 1e-12 * (1.0 + sum.abs()).max(40.0));
            }
        }

        #[test]
        fn premium_invariant_to_price_rescaling(
            idx in prop::collection::vec(1.0f64..1e4, 3..30),
            c in 1e-3f64..1e3,
        ) {
            let n = idx.len();
            let rf = vec![0.003; n];
            let d12: Vec<f64> = idx.iter().map(|v| v * 0.03).collect();
            let a = monthly_equity_premium(&panel(&idx, &rf, &d12), PremiumConvention::PriceOnly).unwrap();
            let scaled: Vec<f64> = idx.iter().map(|v| v * c).collect();
            let b = monthly_equity_premium(&panel(&scaled, &rf, &d12), PremiumConvention::PriceOnly).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12 * 100.0 * (1.0 + x.abs()));
            }
            // total return is invariant when dividends scale with the index
            let d12s: Vec<f64> = d12.iter().map(|v| v * c).collect();
            let a = monthly_equity_premium(&panel(&idx, &rf, &d12), PremiumConvention::TotalReturn).unwrap();
            let b = monthly_equity_premium(&panel(&scaled, &rf, &d12s), PremiumConvention::TotalReturn).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12 * 100.0 * (1.0 + x.abs()));
            }
        }
    }
}
