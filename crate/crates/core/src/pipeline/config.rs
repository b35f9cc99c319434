//! Pipeline configuration: a TOML document with dotted sections, optional
//! environment overrides, and input paths resolved against the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocate::AllocationConfig;
use crate::hurst::FdmaaConfig;
use crate::marketdata::{PremiumConvention, YearMonth};
use crate::predictors::MaConvention;
use crate::regime::ShockRule;

use super::PipelineError;

/// Prefix of environment overrides: `ERP_REGIME__<SECTION>__<KEY>=<value>`.
/// Top-level keys use a single segment, e.g. `ERP_REGIME__SEED=7`.
pub const ENV_PREFIX: &str = "ERP_REGIME__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed for every random draw.
    pub seed: u64,
    pub inputs: Inputs,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub hurst: FdmaaConfig,
    #[serde(default)]
    pub garch: GarchConfig,
    #[serde(default)]
    pub regime: RegimeConfig,
    #[serde(default)]
    pub predictors: PredictorConfig,
    pub oos: OosConfig,
    #[serde(default)]
    pub allocation: AllocationConfig,
    #[serde(default)]
    pub holding: HoldingConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Daily `date,close,volume` file.
    pub daily: PathBuf,
    /// Monthly macro panel.
    #[serde(rename = "macro")]
    pub macro_panel: PathBuf,
    /// `start,end` recession months.
    pub recessions: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GarchConfig {
    /// Run the Hurst estimator on GARCH-standardized returns.
    pub filter: bool,
}

impl Default for GarchConfig {
    fn default() -> Self {
        Self { filter: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeConfig {
    pub h_threshold: f64,
    pub shock: ShockRule,
    pub insample_before: i64,
    pub insample_after: i64,
    pub oos_horizon: i64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            h_threshold: 0.5,
            shock: ShockRule::default(),
            insample_before: 3,
            insample_after: 3,
            oos_horizon: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub ma_convention: MaConvention,
    pub premium: PremiumConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OosConfig {
    /// First forecast month.
    pub start: YearMonth,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_k_max() -> usize {
    3
}

/// Settings of the holding-period and robustness tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoldingConfig {
    pub cost_bps: f64,
}

impl Default for HoldingConfig {
    fn default() -> Self {
        Self { cost_bps: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replications: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replications: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    /// First month of the second subsample.
    pub subsample_split: YearMonth,
    pub trim: f64,
    pub trim_q: f64,
    /// Monthly mean-H cut-offs for the conditioning check.
    pub hurst_thresholds: Vec<f64>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            subsample_split: YearMonth::new(1994, 1).expect("valid month"),
            trim: 0.05,
            trim_q: 0.05,
            hurst_thresholds: vec![0.5, 0.6],
        }
    }
}

fn config_error(message: impl Into<String>) -> PipelineError {
    PipelineError::new("config", message)
}

/// Sets `path` (already split on `__`, lower-cased) inside `table`. The value
/// is read as a TOML literal when it parses as one and as a string otherwise.
fn apply_override(
    table: &mut toml::Table,
    path: &[String],
    raw: &str,
) -> Result<(), PipelineError> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path
        .split_last()
        .ok_or_else(|| config_error("empty override key"))?;
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                config_error(format!(
                    "override path `{}` crosses a non-table",
                    path.join(".")
                ))
            })?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text. Errors carry the line and column of the offending
    /// key or value.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| config_error(e.to_string().trim_end().to_string()))
    }

    /// Parses TOML text after applying `(KEY, value)` overrides, where keys
    /// carry the [`ENV_PREFIX`].
    pub fn from_toml_with_overrides<I>(text: &str, overrides: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let base = Self::from_toml(text)?;
        let mut pairs: Vec<(String, String)> = overrides
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        if pairs.is_empty() {
            return Ok(base);
        }
        pairs.sort();
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        for (k, v) in &pairs {
            let path: Vec<String> = k[ENV_PREFIX.len()..]
                .split("__")
                .map(|s| s.to_ascii_lowercase())
                .collect();
            apply_override(&mut table, &path, v)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error(format!("after environment overrides: {e}")))
    }

    /// Reads the file, applies process environment overrides and resolves
    /// relative paths against the file's directory. Every input must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_with_overrides(&text, std::env::vars())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.inputs.daily);
        fix(&mut self.inputs.macro_panel);
        fix(&mut self.inputs.recessions);
        fix(&mut self.output.dir);
    }

    /// Checks values and that each input file exists; a missing input is
    /// reported under its own stage name.
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (stage, p) in [
            ("daily", &self.inputs.daily),
            ("macro", &self.inputs.macro_panel),
            ("recessions", &self.inputs.recessions),
        ] {
            if !p.is_file() {
                return Err(PipelineError::new(
                    stage,
                    format!("input file not found: {}", p.display()),
                ));
            }
        }
        self.hurst
            .validate()
            .map_err(|e| config_error(e.to_string()))?;
        self.regime
            .shock
            .validate()
            .map_err(|e| config_error(e.to_string()))?;
        self.allocation
            .validate()
            .map_err(|e| config_error(e.to_string()))?;
        if self.oos.k_max == 0 {
            return Err(config_error("oos.k_max must be at least 1"));
        }
        if self.bootstrap.replications < crate::regress::MIN_BOOTSTRAP_REPLICATIONS {
            return Err(config_error(format!(
                "bootstrap.replications = {} is below {}",
                self.bootstrap.replications,
                crate::regress::MIN_BOOTSTRAP_REPLICATIONS
            )));
        }
        if self.regime.insample_before < 0
            || self.regime.insample_after < 0
            || self.regime.oos_horizon < 1
        {
            return Err(config_error(
                "regime windows must be non-negative and oos_horizon >= 1",
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the configuration with file
    /// paths blanked; inputs are identified by content elsewhere.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.inputs.daily = PathBuf::new();
        c.inputs.macro_panel = PathBuf::new();
        c.inputs.recessions = PathBuf::new();
        c.output.dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
