//! End-to-end runs on the bundled fixture, checked against recomputations
//! from the input files and the other output tables.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use erp_regime::pipeline::{
    run_pipeline, sha256_hex, MaskFilter, PipelineConfig, RunOptions, Stage,
};

fn fixture_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(common::fixture_dir().join("pipeline.toml")).unwrap();
    cfg.output.dir = out.to_path_buf();
    cfg
}

/// One full run shared by the read-only tests.
fn full_run() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pipeline-full");
        let _ = std::fs::remove_dir_all(&dir);
        run_pipeline(&fixture_config(&dir), &RunOptions::default()).unwrap();
        dir
    })
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Self {
        let mut rdr = csv::Reader::from_path(path).unwrap();
        let header = rdr.headers().unwrap().iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.unwrap().iter().map(String::from).collect())
            .collect();
        Csv { header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    }
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn masked(prefix: &str, suffix: &str) -> String {
    [
        "exp",
        "rec",
        "stable_plus",
        "bu_plus",
        "stable_minus",
        "bu_minus",
    ]
    .iter()
    .map(|m| format!("{prefix}{m}{suffix}"))
    .collect::<Vec<_>>()
    .join(",")
}

#[test]
fn table_headers() {
    let d = full_run();
    let expect = [
        ("hurst.csv", "date,h,r2".to_string()),
        ("fig1_hurst.csv", "date,h".into()),
        ("regime.csv", "month,b,bu,peak,trough".into()),
        ("fig2_bullish.csv", "month,bu".into()),
        ("recession_shading.csv", "start,end".into()),
        (
            "insample.csv",
            format!("predictor,group,k,slope,t_stat,p_value,stars,r2_pct,{}", masked("r2_", "_pct")),
        ),
        (
            "allocation.csv",
            format!(
                "model,group,cost_bps,kappa,mean_weight,turnover,cer_pct,cer_ha_pct,cer_gain_pct,{}",
                masked("cer_gain_", "_pct")
            ),
        ),
        ("holding_periods.csv", "model,regime,holding,from,to,cer_gain_pct".into()),
        ("fig3_cer_by_holding.csv", "holding,model,regime,cer_gain".into()),
        ("summary_stats.csv", "variable,n,mean,std,min,max,autocorr".into()),
        ("robustness.csv", "check,model,regime,months,r2os_pct,cw_stat,cw_p,cer_gain_pct".into()),
    ];
    for (file, want) in expect {
        assert_eq!(header(&d.join(file)), want, "{file}");
    }
    let oos = header(&d.join("oos.csv"));
    assert!(oos.starts_with(
        "model,group,months,fallbacks,r2os_pct,cw_stat,cw_p,stars,r2os_exp_pct,cw_exp_p,"
    ));
    assert!(oos.ends_with("r2os_bu_minus_pct,cw_bu_minus_p"));
}

#[test]
fn manifest_hashes_match_files() {
    let d = full_run();
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_object().unwrap();
    let files: Vec<String> = common::tree(d)
        .into_iter()
        .map(|(p, _)| p)
        .filter(|p| p != "manifest.json")
        .collect();
    assert_eq!(outputs.keys().cloned().collect::<Vec<_>>(), files);
    for (name, hash) in outputs {
        assert_eq!(
            hash.as_str().unwrap(),
            sha256_hex(&std::fs::read(d.join(name)).unwrap()),
            "{name}"
        );
    }
    let daily = std::fs::read(common::fixture_dir().join("daily.csv")).unwrap();
    assert_eq!(
        manifest["inputs"]["daily"].as_str().unwrap(),
        sha256_hex(&daily)
    );
    assert_eq!(manifest["stage"], "report");
    assert_eq!(manifest["allocation_mask"], "all");
}

#[test]
fn figure_one_mirrors_the_hurst_table() {
    let d = full_run();
    let h = Csv::read(&d.join("hurst.csv"));
    let f = Csv::read(&d.join("fig1_hurst.csv"));
    assert_eq!(h.rows.len(), f.rows.len());
    for (a, b) in h.rows.iter().zip(&f.rows) {
        assert_eq!(a[..2], b[..]);
    }
    // window 215 on 3130 returns
    assert_eq!(h.rows.len(), 3130 - 215 + 1);
}

#[test]
fn bullish_index_and_shocks_follow_the_ratio() {
    let d = full_run();
    let r = Csv::read(&d.join("regime.csv"));
    let b: Vec<f64> = r.rows.iter().map(|row| row[1].parse().unwrap()).collect();
    assert_eq!(r.rows[0][2], "NA");
    let mut shocks = 0;
    for t in 1..b.len() {
        let want = if b[t] == 0.0 || b[t - 1] == 0.0 {
            0.0
        } else {
            (b[t] / b[t - 1]).ln()
        };
        let bu: f64 = r.rows[t][2].parse().unwrap();
        assert!((bu - want).abs() <= 1e-12, "month {}", r.rows[t][0]);
        assert_eq!(r.rows[t][3], if bu > 1.0 { "1" } else { "0" });
        assert_eq!(r.rows[t][4], if bu < -1.0 { "1" } else { "0" });
        shocks += usize::from(bu.abs() > 1.0);
    }
    assert!(shocks > 0, "fixture should contain shocks");
    let fig = Csv::read(&d.join("fig2_bullish.csv"));
    let pairs: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| vec![row[0].clone(), row[2].clone()])
        .collect();
    assert_eq!(fig.rows, pairs);
}

/// Month-end closes of the fixture read straight from the daily file.
fn month_end_closes() -> BTreeMap<String, f64> {
    let daily = Csv::read(&common::fixture_dir().join("daily.csv"));
    let mut out = BTreeMap::new();
    for row in &daily.rows {
        out.insert(row[0][..7].to_string(), row[1].parse().unwrap());
    }
    out
}

#[test]
fn technical_rules_match_direct_recomputation() {
    let closes = month_end_closes();
    let months: Vec<&String> = closes.keys().collect();
    let p: Vec<f64> = closes.values().copied().collect();
    let preds = Csv::read(&full_run().join("predictors.csv"));
    for row in &preds.rows {
        let t = months.iter().position(|m| **m == row[0]).unwrap();
        let ma = |j: usize| (0..j).map(|i| p[t - i]).sum::<f64>() / j as f64;
        for (s, l) in [(1, 9), (1, 12), (2, 9), (2, 12), (3, 9), (3, 12)] {
            let want = if ma(s) >= ma(l) { "1" } else { "0" };
            assert_eq!(
                row[preds.col(&format!("MA({s},{l})"))],
                want,
                "{} MA({s},{l})",
                row[0]
            );
        }
        for m in [9, 12] {
            let want = if p[t] >= p[t - m] { "1" } else { "0" };
            assert_eq!(
                row[preds.col(&format!("MOM({m})"))],
                want,
                "{} MOM({m})",
                row[0]
            );
        }
    }
}

#[test]
fn holding_figure_covers_every_horizon() {
    let d = full_run();
    let fig = Csv::read(&d.join("fig3_cer_by_holding.csv"));
    assert_eq!(fig.rows.len(), 12 * 3 * 2);
    let horizons: Vec<u32> = fig.rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(horizons.windows(2).all(|w| w[0] <= w[1]));
    let models: std::collections::BTreeSet<&str> = fig.rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(
        models.into_iter().collect::<Vec<_>>(),
        ["PC-ALL", "PC-ECON", "PC-TECH"]
    );

    let grid = Csv::read(&d.join("holding_periods.csv"));
    assert_eq!(grid.rows.len(), 3 * 2 * 4);
    let labels: Vec<&str> = grid.rows.iter().take(4).map(|r| r[2].as_str()).collect();
    assert_eq!(labels, ["G1-G3", "G4-G6", "G7-G9", "G10-G12"]);
}

#[test]
fn allocation_rows_cover_both_costs() {
    let a = Csv::read(&full_run().join("allocation.csv"));
    let costs: std::collections::BTreeSet<&str> = a.rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(costs.into_iter().collect::<Vec<_>>(), ["0", "50"]);
    assert_eq!(a.rows.len(), 31 * 2);
    for r in &a.rows {
        let w: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.5).contains(&w));
    }
}

#[test]
fn stages_stop_early_and_agree_with_the_full_run() {
    let full = full_run();
    let all: BTreeMap<String, Vec<u8>> = common::tree(full).into_iter().collect();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(tmp.path());
    cfg.output.dir = tmp.path().join("oos");
    let opts = RunOptions {
        stage: Stage::Oos,
        ..Default::default()
    };
    run_pipeline(&cfg, &opts).unwrap();
    let part = common::tree(&cfg.output.dir);
    let names: Vec<&str> = part.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"oos.csv") && !names.contains(&"allocation.csv"));
    for (name, bytes) in &part {
        if name != "manifest.json" {
            assert_eq!(&all[name], bytes, "{name}");
        }
    }
}

#[test]
fn allocation_mask_changes_only_allocation_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture_config(&tmp.path().join("masked"));
    let opts = RunOptions {
        stage: Stage::Allocate,
        mask: "exclude-recession".parse::<MaskFilter>().unwrap(),
    };
    let summary = run_pipeline(&cfg, &opts).unwrap();
    assert_eq!(summary.manifest.allocation_mask, "exclude-recession");
    let full: BTreeMap<String, Vec<u8>> = common::tree(full_run()).into_iter().collect();
    for (name, bytes) in common::tree(&cfg.output.dir) {
        let alloc = [
            "allocation.csv",
            "holding_periods.csv",
            "fig3_cer_by_holding.csv",
            "manifest.json",
        ];
        if !alloc.contains(&name.as_str()) {
            assert_eq!(full[&name], bytes, "{name}");
        }
    }
    let a = Csv::read(&cfg.output.dir.join("allocation.csv"));
    let rec = a.col("cer_gain_rec_pct");
    assert!(a.rows.iter().all(|r| r[rec] == "NA"));
}

#[test]
fn empty_recession_calendar() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["daily.csv", "macro.csv", "pipeline.toml"] {
        std::fs::copy(common::fixture_dir().join(f), tmp.path().join(f)).unwrap();
    }
    std::fs::write(tmp.path().join("recessions.csv"), "start,end\n").unwrap();
    let mut cfg = PipelineConfig::load(tmp.path().join("pipeline.toml")).unwrap();
    cfg.output.dir = tmp.path().join("out");
    run_pipeline(
        &cfg,
        &RunOptions {
            stage: Stage::Insample,
            ..Default::default()
        },
    )
    .unwrap();
    let shading = std::fs::read_to_string(cfg.output.dir.join("recession_shading.csv")).unwrap();
    assert_eq!(shading, "start,end\n");
    let ins = Csv::read(&cfg.output.dir.join("insample.csv"));
    let (all, exp, rec) = (
        ins.col("r2_pct"),
        ins.col("r2_exp_pct"),
        ins.col("r2_rec_pct"),
    );
    for r in &ins.rows {
        let (a, e): (f64, f64) = (r[all].parse().unwrap(), r[exp].parse().unwrap());
        assert!((a - e).abs() <= 1e-10, "{}", r[0]);
        assert_eq!(r[rec], "NA", "{}", r[0]);
    }
}

#[test]
fn seed_changes_only_bootstrap_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(&tmp.path().join("seeded"));
    cfg.seed += 1;
    run_pipeline(
        &cfg,
        &RunOptions {
            stage: Stage::Insample,
            ..Default::default()
        },
    )
    .unwrap();
    let full: BTreeMap<String, Vec<u8>> = common::tree(full_run()).into_iter().collect();
    for (name, bytes) in common::tree(&cfg.output.dir) {
        if name == "insample.csv" {
            let (a, b) = (
                Csv::read(&full_run().join(&name)),
                Csv::read(&cfg.output.dir.join(&name)),
            );
            let p = a.col("p_value");
            for (x, y) in a.rows.iter().zip(&b.rows) {
                let mut x = x.clone();
                let mut y = y.clone();
                x.drain(p..p + 2);
                y.drain(p..p + 2);
                assert_eq!(x, y);
            }
        } else if name != "manifest.json" {
            assert_eq!(full[&name], bytes, "{name}");
        }
    }
}
