//! Writes the bundled synthetic fixture: daily closes and volumes, a monthly
//! macro panel and a recession calendar.
//!
//! Daily returns mix persistent and antipersistent fractional Gaussian noise
//! with occasional stress months, which makes the Bullish ratio swing hard
//! enough for shocks to appear.
//!
//! Usage: `cargo run --example make_fixture -- <output dir>`

use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::{Datelike, NaiveDate, Weekday};
use erp_regime::hurst::generate_fgn;
use erp_regime::marketdata::YearMonth;
use erp_regime::stats::{derive_seed, rng};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const SEED: u64 = 20_240_901;
const FIRST_YEAR: i32 = 1998;
const LAST_YEAR: i32 = 2009;

fn business_days() -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(FIRST_YEAR, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(LAST_YEAR, 12, 31).unwrap();
    let mut out = Vec::new();
    while d <= end {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

/// Daily log returns: fGn noise whose exponent alternates around one half in
/// blocks of 60 to 200 days, plus a strongly negative drift in randomly
/// chosen stress months.
fn daily_returns(days: &[NaiveDate]) -> Vec<f64> {
    let n = days.len();
    let mut r = rng(derive_seed(SEED, 1, 0));
    let mut noise = Vec::with_capacity(n);
    let mut block = 0u64;
    while noise.len() < n {
        let len = r.random_range(60..=200);
        let h = if block.is_multiple_of(2) {
            r.random_range(0.55..0.70)
        } else {
            r.random_range(0.30..0.45)
        };
        noise.extend(generate_fgn(h, len, derive_seed(SEED, 2, block)).expect("valid exponent"));
        block += 1;
    }
    let mut stress = std::collections::BTreeMap::new();
    days.iter()
        .zip(&noise)
        .map(|(d, e)| {
            let hit = *stress
                .entry(YearMonth::of(*d))
                .or_insert_with(|| r.random_bool(0.08));
            let drift = if hit { -0.010 } else { 0.0006 };
            drift + 0.009 * e
        })
        .collect()
}

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/core/tests/fixtures".into()),
    );
    std::fs::create_dir_all(&dir).expect("create output dir");

    let days = business_days();
    let rets = daily_returns(&days);
    let mut noise = rng(derive_seed(SEED, 3, 0));
    let mut daily = String::from("date,close,volume\n");
    let mut close = 1000.0_f64;
    let mut month_end: Vec<(YearMonth, f64)> = Vec::new();
    for (i, d) in days.iter().enumerate() {
        if i > 0 {
            close *= rets[i].exp();
        }
        let z: f64 = StandardNormal.sample(&mut noise);
        let volume = (1.0e6 * (1.0 + 40.0 * rets[i].abs()) * (0.2 * z).exp()).round();
        writeln!(daily, "{d},{close:.4},{volume}").unwrap();
        let m = YearMonth::of(*d);
        match month_end.last_mut() {
            Some(last) if last.0 == m => last.1 = close,
            _ => month_end.push((m, close)),
        }
    }

    // Persistent macro state variables.
    let mut r = rng(derive_seed(SEED, 4, 0));
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut r) };
    let mut macro_csv =
        String::from("yyyymm,Index,D12,E12,bm,tbl,AAA,BAA,lty,ntis,Rfree,infl,ltr,corpr\n");
    let (mut dy, mut ey, mut bm, mut tbl, mut lty, mut spread, mut ntis) =
        (0.018, 0.05, 0.30, 0.045, 0.055, 0.009, 0.01);
    for (m, index) in &month_end {
        dy = (0.018 + 0.95 * (dy - 0.018) + 0.0008 * gauss()).max(0.005);
        ey = (0.05 + 0.95 * (ey - 0.05) + 0.002 * gauss()).max(0.01);
        bm = (0.30 + 0.97 * (bm - 0.30) + 0.01 * gauss()).max(0.05);
        tbl = (0.04 + 0.98 * (tbl - 0.04) + 0.002 * gauss()).max(0.0005);
        lty = (0.05 + 0.98 * (lty - 0.05) + 0.0015 * gauss()).max(tbl * 0.5 + 0.005);
        spread = (0.009 + 0.9 * (spread - 0.009) + 0.0008 * gauss()).max(0.002);
        ntis = 0.01 + 0.9 * (ntis - 0.01) + 0.003 * gauss();
        let aaa = lty + 0.008;
        let baa = aaa + spread;
        let rfree = tbl / 12.0;
        let infl = 0.002 + 0.002 * gauss();
        let ltr = 0.005 + 0.02 * gauss();
        let corpr = ltr + 0.004 * gauss();
        writeln!(
            macro_csv,
            "{}{:02},{index:.4},{:.6},{:.6},{bm:.6},{tbl:.6},{aaa:.6},{baa:.6},{lty:.6},{ntis:.6},{rfree:.8},{infl:.6},{ltr:.6},{corpr:.6}",
            m.year(),
            m.month(),
            dy * index,
            ey * index,
        )
        .unwrap();
    }

    let recessions = "start,end\n2001-03,2001-11\n2007-12,2009-06\n";

    std::fs::write(dir.join("daily.csv"), daily).unwrap();
    std::fs::write(dir.join("macro.csv"), macro_csv).unwrap();
    std::fs::write(dir.join("recessions.csv"), recessions).unwrap();
    println!(
        "wrote {} days and {} months to {}",
        days.len(),
        month_end.len(),
        dir.display()
    );
}
