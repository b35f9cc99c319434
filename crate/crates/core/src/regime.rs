//! Monthly Bullish ratio and Bullish Index, shock detection and the regime
//! masks that condition evaluation and allocation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hurst::HurstSeries;
use crate::marketdata::{RecessionCalendar, ReturnSeries, YearMonth};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegimeError {
    #[error("no trading day has both a return and a Hurst estimate")]
    EmptyJoin,
    #[error("invalid shock rule: {0}")]
    InvalidRule(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BullishSeries {
    pub months: Vec<YearMonth>,
    /// Share of joined trading days with a positive return and `H` above
    /// the threshold.
    pub b: Vec<f64>,
    /// `None` for the first month only.
    pub bu: Vec<Option<f64>>,
}

impl BullishSeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn position(&self, month: YearMonth) -> Option<usize> {
        self.months.binary_search(&month).ok()
    }
}

/// Monthly ratio over days present in both series. Days whose window fit
/// failed are not counted in either the numerator or the denominator.
pub fn bullish_ratio(
    r: &ReturnSeries,
    h: &HurstSeries,
    h_threshold: f64,
) -> Result<(Vec<YearMonth>, Vec<f64>), RegimeError> {
    let mut hmap = BTreeMap::new();
    for (d, v) in h.defined() {
        hmap.insert(d, v);
    }
    let mut counts: BTreeMap<YearMonth, (usize, usize)> = BTreeMap::new();
    for (d, &ret) in r.dates.iter().zip(&r.values) {
        if let Some(&hv) = hmap.get(d) {
            let e = counts.entry(YearMonth::of(*d)).or_default();
            e.1 += 1;
            if ret > 0.0 && hv > h_threshold {
                e.0 += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(RegimeError::EmptyJoin);
    }
    Ok(counts
        .into_iter()
        .map(|(m, (hit, total))| (m, hit as f64 / total as f64))
        .unzip())
}

/// `ln(B_t / B_{t-1})`, zero whenever either ratio is zero.
pub fn bullish_index(b: &[f64]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(b.len());
    if b.is_empty() {
        return out;
    }
    out.push(None);
    for w in b.windows(2) {
        out.push(Some(if w[0] == 0.0 || w[1] == 0.0 {
            0.0
        } else {
            (w[1] / w[0]).ln()
        }));
    }
    out
}

pub fn bullish_series(
    r: &ReturnSeries,
    h: &HurstSeries,
    h_threshold: f64,
) -> Result<BullishSeries, RegimeError> {
    let (months, b) = bullish_ratio(r, h, h_threshold)?;
    let bu = bullish_index(&b);
    Ok(BullishSeries { months, b, bu })
}

/// How peaks and troughs are picked out of the Bullish Index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockRule {
    /// `BU > threshold` is a peak, `BU < -threshold` a trough.
    Fixed { threshold: f64 },
    /// Top and bottom `q` fractions of the defined values, boundary ties
    /// included. Peaks must be positive and troughs negative.
    Quantile { q: f64 },
    /// Drop the top and bottom `trim` fractions, then apply `Quantile { q }`
    /// to what remains. Dropped months are never shocks.
    TrimmedQuantile { trim: f64, q: f64 },
}

impl Default for ShockRule {
    fn default() -> Self {
        ShockRule::Fixed { threshold: 1.0 }
    }
}

impl ShockRule {
    pub fn validate(&self) -> Result<(), RegimeError> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 0.5 {
                Ok(())
            } else {
                Err(RegimeError::InvalidRule(format!(
                    "{name} = {v} outside (0, 0.5)"
                )))
            }
        };
        match *self {
            ShockRule::Fixed { threshold } if threshold >= 0.0 && threshold.is_finite() => Ok(()),
            ShockRule::Fixed { threshold } => Err(RegimeError::InvalidRule(format!(
                "threshold = {threshold} must be finite and >= 0"
            ))),
            ShockRule::Quantile { q } => frac("q", q),
            ShockRule::TrimmedQuantile { trim, q } => {
                frac("trim", trim)?;
                frac("q", q)
            }
        }
    }
}

/// Per-month shock flags aligned with the Bullish series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shocks {
    pub peak: Vec<bool>,
    pub trough: Vec<bool>,
}

impl Shocks {
    pub fn len(&self) -> usize {
        self.peak.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak.is_empty()
    }

    pub fn peak_indices(&self) -> Vec<usize> {
        indices(&self.peak)
    }

    pub fn trough_indices(&self) -> Vec<usize> {
        indices(&self.trough)
    }
}

fn indices(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i)
        .collect()
}

fn count_for(q: f64, total: usize) -> usize {
    ((q * total as f64).ceil() as usize).min(total)
}

/// Thresholds `(upper, lower)` such that at least `ceil(q * T)` values lie at
/// or beyond each.
fn quantile_bounds(values: &[f64], q: f64) -> Option<(f64, f64)> {
    let k = count_for(q, values.len());
    if k == 0 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some((sorted[sorted.len() - k], sorted[k - 1]))
}

pub fn detect_shocks(bu: &[Option<f64>], rule: ShockRule) -> Shocks {
    let n = bu.len();
    let mut peak = vec![false; n];
    let mut trough = vec![false; n];
    let defined: Vec<f64> = bu.iter().flatten().copied().collect();
    match rule {
        ShockRule::Fixed { threshold } => {
            for (i, v) in bu.iter().enumerate() {
                if let Some(v) = *v {
                    peak[i] = v > threshold;
                    trough[i] = v < -threshold;
                }
            }
        }
        ShockRule::Quantile { q } => {
            if let Some((hi, lo)) = quantile_bounds(&defined, q) {
                for (i, v) in bu.iter().enumerate() {
                    if let Some(v) = *v {
                        peak[i] = v >= hi && v > 0.0;
                        trough[i] = v <= lo && v < 0.0;
                    }
                }
            }
        }
        ShockRule::TrimmedQuantile { trim, q } => {
            let Some((cut_hi, cut_lo)) = quantile_bounds(&defined, trim) else {
                return Shocks { peak, trough };
            };
            let kept: Vec<f64> = defined
                .iter()
                .copied()
                .filter(|&v| v < cut_hi && v > cut_lo)
                .collect();
            if let Some((hi, lo)) = quantile_bounds(&kept, q) {
                for (i, v) in bu.iter().enumerate() {
                    if let Some(v) = *v {
                        let inside = v < cut_hi && v > cut_lo;
                        peak[i] = inside && v >= hi && v > 0.0;
                        trough[i] = inside && v <= lo && v < 0.0;
                    }
                }
            }
        }
    }
    Shocks { peak, trough }
}

/// Marks `[t + from, t + to]` around every flagged `t`, clipped to the series
/// and merged by union.
pub fn window_mask(events: &[bool], from: i64, to: i64) -> Vec<bool> {
    let n = events.len() as i64;
    let mut mask = vec![false; events.len()];
    for t in indices(events) {
        let lo = (t as i64 + from).max(0);
        let hi = (t as i64 + to).min(n - 1);
        for i in lo..=hi {
            mask[i as usize] = true;
        }
    }
    mask
}

/// Boolean conditioning masks over a monthly timeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeMasks {
    pub peak: Vec<bool>,
    pub trough: Vec<bool>,
    pub stable_plus: Vec<bool>,
    pub stable_minus: Vec<bool>,
    pub recession: Vec<bool>,
    pub expansion: Vec<bool>,
}

impl RegimeMasks {
    /// Masks from peak and trough windows; every month counts as expansion
    /// until a calendar is attached.
    pub fn from_windows(peak: Vec<bool>, trough: Vec<bool>) -> Self {
        let n = peak.len();
        Self {
            stable_plus: peak.iter().map(|p| !p).collect(),
            stable_minus: trough.iter().map(|p| !p).collect(),
            peak,
            trough,
            recession: vec![false; n],
            expansion: vec![true; n],
        }
    }

    pub fn with_calendar(mut self, months: &[YearMonth], calendar: &RecessionCalendar) -> Self {
        self.recession = calendar.mask(months);
        self.expansion = self.recession.iter().map(|r| !r).collect();
        self
    }

    /// Restricts every mask to the given positions of the timeline.
    pub fn select(&self, positions: &[usize]) -> Self {
        let pick = |v: &[bool]| positions.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            peak: pick(&self.peak),
            trough: pick(&self.trough),
            stable_plus: pick(&self.stable_plus),
            stable_minus: pick(&self.stable_minus),
            recession: pick(&self.recession),
            expansion: pick(&self.expansion),
        }
    }

    pub fn named(&self) -> [(&'static str, &[bool]); 6] {
        [
            ("exp", &self.expansion),
            ("rec", &self.recession),
            ("stable_plus", &self.stable_plus),
            ("bu_plus", &self.peak),
            ("stable_minus", &self.stable_minus),
            ("bu_minus", &self.trough),
        ]
    }
}

/// `[t - before, t + after]` around each shock.
pub fn insample_masks(shocks: &Shocks, before: i64, after: i64) -> RegimeMasks {
    RegimeMasks::from_windows(
        window_mask(&shocks.peak, -before, after),
        window_mask(&shocks.trough, -before, after),
    )
}

/// `[t + 1, t + horizon]` after each shock.
pub fn oos_masks(shocks: &Shocks, horizon: i64) -> RegimeMasks {
    RegimeMasks::from_windows(
        window_mask(&shocks.peak, 1, horizon),
        window_mask(&shocks.trough, 1, horizon),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn flags(n: usize, at: &[usize]) -> Vec<bool> {
        (0..n).map(|i| at.contains(&i)).collect()
    }

    fn on(mask: &[bool]) -> Vec<usize> {
        indices(mask)
    }

    fn month_of_days(pattern: &[(f64, f64)]) -> (ReturnSeries, HurstSeries) {
        let dates: Vec<NaiveDate> = (0..pattern.len())
            .map(|i| NaiveDate::from_ymd_opt(2001, 3, 1 + i as u32).unwrap())
            .collect();
        let r = ReturnSeries::new(dates.clone(), pattern.iter().map(|p| p.0).collect()).unwrap();
        let h = HurstSeries {
            dates,
            h: pattern.iter().map(|p| Some(p.1)).collect(),
            r2: vec![Some(1.0); pattern.len()],
        };
        (r, h)
    }

    #[test]
    fn ratio_examples() {
        let (r, h) = month_of_days(&[(0.01, 0.6); 21]);
        assert_eq!(bullish_ratio(&r, &h, 0.5).unwrap().1, vec![1.0]);
        let (r, h) = month_of_days(&[(-0.01, 0.6); 21]);
        assert_eq!(bullish_ratio(&r, &h, 0.5).unwrap().1, vec![0.0]);
        let mut days = vec![(0.01, 0.4); 20];
        for d in days.iter_mut().take(8) {
            *d = (0.02, 0.55);
        }
        let (r, h) = month_of_days(&days);
        assert_eq!(bullish_ratio(&r, &h, 0.5).unwrap().1, vec![0.4]);
    }

    #[test]
    fn ratio_skips_days_without_estimate() {
        let (r, mut h) = month_of_days(&[(0.01, 0.6); 4]);
        h.h[0] = None;
        h.h[1] = None;
        h.h[2] = Some(0.3);
        assert_eq!(bullish_ratio(&r, &h, 0.5).unwrap().1, vec![0.5]);
        h.h = vec![None; 4];
        assert_eq!(
            bullish_ratio(&r, &h, 0.5).unwrap_err(),
            RegimeError::EmptyJoin
        );
    }

    #[test]
    fn index_examples() {
        let bu = bullish_index(&[0.25, 0.5]);
        assert_eq!(bu[0], None);
        assert!((bu[1].unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(bullish_index(&[0.0, 0.4])[1], Some(0.0));
        assert_eq!(bullish_index(&[0.4, 0.0])[1], Some(0.0));
        let ab = bullish_index(&[0.3, 0.7])[1].unwrap();
        let ba = bullish_index(&[0.7, 0.3])[1].unwrap();
        assert!((ab + ba).abs() < 1e-15);
    }

    #[test]
    fn fixed_threshold_shocks() {
        let bu = [Some(0.0), Some(0.0), Some(2.1), Some(0.0), Some(-1.5)];
        let s = detect_shocks(&bu, ShockRule::default());
        assert_eq!(s.peak_indices(), vec![2]);
        assert_eq!(s.trough_indices(), vec![4]);
        let zero = detect_shocks(&[Some(0.0); 40], ShockRule::default());
        assert!(zero.peak_indices().is_empty() && zero.trough_indices().is_empty());
        let zero = detect_shocks(&[Some(0.0); 40], ShockRule::Quantile { q: 0.025 });
        assert!(zero.peak_indices().is_empty() && zero.trough_indices().is_empty());
    }

    #[test]
    fn quantile_counts_and_ties() {
        let mut bu: Vec<Option<f64>> = (0..80).map(|i| Some(i as f64 - 39.5)).collect();
        bu.insert(0, None);
        let s = detect_shocks(&bu, ShockRule::Quantile { q: 0.025 });
        assert_eq!(s.peak_indices(), vec![79, 80]);
        assert_eq!(s.trough_indices(), vec![1, 2]);
        let tied = [Some(3.0), Some(3.0), Some(1.0), Some(-2.0), Some(0.5)];
        let s = detect_shocks(&tied, ShockRule::Quantile { q: 0.1 });
        assert_eq!(s.peak_indices(), vec![0, 1]);
        assert_eq!(s.trough_indices(), vec![3]);
    }

    #[test]
    fn trimmed_quantile_skips_extremes() {
        let bu: Vec<Option<f64>> = (0..100).map(|i| Some(i as f64 - 49.5)).collect();
        let s = detect_shocks(
            &bu,
            ShockRule::TrimmedQuantile {
                trim: 0.05,
                q: 0.05,
            },
        );
        // 5 dropped per side, ceil(0.05 * 90) = 5 flagged per side
        assert_eq!(s.peak_indices(), vec![90, 91, 92, 93, 94]);
        assert_eq!(s.trough_indices(), vec![5, 6, 7, 8, 9]);
    }

    #[test]
    fn insample_windows() {
        let m = insample_masks(
            &Shocks {
                peak: flags(30, &[10]),
                trough: flags(30, &[1]),
            },
            3,
            3,
        );
        assert_eq!(on(&m.peak), (7..=13).collect::<Vec<_>>());
        assert_eq!(on(&m.trough), (0..=4).collect::<Vec<_>>());
        assert!(m.stable_plus.iter().zip(&m.peak).all(|(s, p)| s != p));
        let m = insample_masks(
            &Shocks {
                peak: flags(30, &[10, 12]),
                trough: flags(30, &[]),
            },
            3,
            3,
        );
        assert_eq!(on(&m.peak), (7..=15).collect::<Vec<_>>());
    }

    #[test]
    fn oos_windows() {
        let m = oos_masks(
            &Shocks {
                peak: flags(30, &[10]),
                trough: flags(30, &[29]),
            },
            3,
        );
        assert_eq!(on(&m.peak), vec![11, 12, 13]);
        assert!(on(&m.trough).is_empty());
        let m = oos_masks(
            &Shocks {
                peak: flags(30, &[10, 11]),
                trough: flags(30, &[]),
            },
            3,
        );
        assert_eq!(on(&m.peak), vec![11, 12, 13, 14]);
    }

    #[test]
    fn calendar_masks_are_complementary() {
        let months: Vec<YearMonth> = (0..6)
            .map(|i| YearMonth::new(2008, 1).unwrap().offset(i))
            .collect();
        let cal = RecessionCalendar::new(vec![(months[2], months[3])]).unwrap();
        let m =
            RegimeMasks::from_windows(vec![false; 6], vec![false; 6]).with_calendar(&months, &cal);
        assert_eq!(on(&m.recession), vec![2, 3]);
        assert!(m.recession.iter().zip(&m.expansion).all(|(r, e)| r != e));
    }

    proptest! {
        #[test]
        fn ratio_stays_in_unit_interval_and_falls_with_threshold(
            days in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1.0), 1..28),
            higher in 0.5f64..1.0,
        ) {
            let (r, h) = month_of_days(&days);
            let base = bullish_ratio(&r, &h, 0.5).unwrap().1[0];
            let raised = bullish_ratio(&r, &h, higher).unwrap().1[0];
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!(raised <= base);
        }

        #[test]
        fn window_widths_are_bounded(n in 1usize..60, at in 0usize..60) {
            let ev = flags(n, &[at]);
            prop_assert!(on(&window_mask(&ev, -3, 3)).len() <= 7);
            prop_assert!(on(&window_mask(&ev, 1, 3)).len() <= 3);
        }

        #[test]
        fn quantile_flags_ceil_count_per_side(
            mut vals in proptest::collection::hash_set(-1000i32..1000, 10..200),
        ) {
            let v: Vec<Option<f64>> = vals.drain().map(|x| Some(x as f64 + 0.5)).collect();
            let pos = v.iter().flatten().filter(|x| **x > 0.0).count();
            let neg = v.len() - pos;
            let k = (0.025 * v.len() as f64).ceil() as usize;
            let s = detect_shocks(&v, ShockRule::Quantile { q: 0.025 });
            prop_assert_eq!(s.peak_indices().len(), k.min(pos));
            prop_assert_eq!(s.trough_indices().len(), k.min(neg));
        }
    }
}
