//! Least squares with Newey–West t-statistics, the fixed-regressor wild
//! bootstrap, principal components of a predictor block and the
//! principal-component predictive regression.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::stats;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegressError {
    #[error("{nobs} observations cannot identify {ncols} coefficients")]
    TooFewObservations { nobs: usize, ncols: usize },
    #[error("regressor columns {0:?} are collinear with earlier columns (0 is the intercept)")]
    RankDeficient(Vec<usize>),
    #[error("column lengths differ: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value in the regression data")]
    NonFinite,
    #[error("Newey-West lag {lag} must be below the sample size {nobs}")]
    LagTooLarge { lag: usize, nobs: usize },
    #[error("coefficient covariance is degenerate; t-statistics are undefined")]
    ZeroCovariance,
    #[error("column {0} has zero variance")]
    ZeroVariance(usize),
    #[error("invalid setting: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, RegressError>;

/// Least-squares fit with an intercept in position 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub r2: f64,
    pub adjusted_r2: f64,
    /// Newey–West t-statistics at the default lag; `None` when the
    /// covariance is degenerate.
    pub hac_tstats: Option<Vec<f64>>,
    pub nobs: usize,
    design: DMatrix<f64>,
    xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Prediction for one row of regressors (without the intercept).
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients[0]
            + self
                .slopes()
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

fn design_matrix(nobs: usize, x: &[&[f64]]) -> Result<DMatrix<f64>> {
    for c in x {
        if c.len() != nobs {
            return Err(RegressError::Length {
                expected: nobs,
                got: c.len(),
            });
        }
    }
    let mut m = DMatrix::from_element(nobs, x.len() + 1, 1.0);
    for (j, c) in x.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            m[(i, j + 1)] = v;
        }
    }
    Ok(m)
}

const RANK_TOL: f64 = 1e-9;

/// Regresses `y` on an intercept and the columns of `x`.
pub fn ols_fit(y: &[f64], x: &[&[f64]]) -> Result<OlsFit> {
    let nobs = y.len();
    let ncols = x.len() + 1;
    if nobs <= ncols {
        return Err(RegressError::TooFewObservations { nobs, ncols });
    }
    if y.iter()
        .chain(x.iter().flat_map(|c| c.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(RegressError::NonFinite);
    }
    let design = design_matrix(nobs, x)?;
    let qr = design.clone().qr();
    let r = qr.r();
    let collinear: Vec<usize> = (0..ncols)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * design.column(j).norm().max(f64::MIN_POSITIVE))
        .collect();
    if !collinear.is_empty() {
        return Err(RegressError::RankDeficient(collinear));
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| RegressError::RankDeficient(vec![]))?;
    let fitted = &design * &beta;
    let resid = &yv - &fitted;
    let ybar = stats::mean(y);
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr = resid.norm_squared();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };
    let adjusted_r2 = 1.0 - (1.0 - r2) * (nobs as f64 - 1.0) / (nobs - ncols) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(ncols, ncols))
        .ok_or_else(|| RegressError::RankDeficient(vec![]))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let mut fit = OlsFit {
        coefficients: beta.iter().copied().collect(),
        residuals: resid.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
        r2,
        adjusted_r2,
        hac_tstats: None,
        nobs,
        design,
        xtx_inv,
    };
    fit.hac_tstats = hac_tstats(&fit, None).ok();
    Ok(fit)
}

/// `floor(4 * (T / 100)^(2/9))`.
pub fn newey_west_lag(nobs: usize) -> usize {
    (4.0 * (nobs as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Newey–West long-run variance of the moment contributions `x_t * e_t`
/// with Bartlett weights `1 - l / (L + 1)`; no small-sample correction.
pub fn newey_west_meat(design: &DMatrix<f64>, resid: &[f64], lag: usize) -> DMatrix<f64> {
    let (n, k) = design.shape();
    let mut g = DMatrix::zeros(n, k);
    for t in 0..n {
        for j in 0..k {
            g[(t, j)] = design[(t, j)] * resid[t];
        }
    }
    let mut s = g.transpose() * &g;
    for l in 1..=lag {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let head = g.rows(l, n - l);
        let tail = g.rows(0, n - l);
        let gamma = head.transpose() * tail;
        s += (&gamma + gamma.transpose()) * w;
    }
    s
}

/// Newey–West covariance of the coefficients.
pub fn hac_covariance(fit: &OlsFit, lag: Option<usize>) -> Result<DMatrix<f64>> {
    let lag = lag.unwrap_or_else(|| newey_west_lag(fit.nobs));
    if lag >= fit.nobs {
        return Err(RegressError::LagTooLarge {
            lag,
            nobs: fit.nobs,
        });
    }
    let meat = newey_west_meat(&fit.design, &fit.residuals, lag);
    Ok(&fit.xtx_inv * meat * &fit.xtx_inv)
}

/// Coefficient t-statistics under the Newey–West covariance.
pub fn hac_tstats(fit: &OlsFit, lag: Option<usize>) -> Result<Vec<f64>> {
    let cov = hac_covariance(fit, lag)?;
    let scale = fit.coefficients.iter().map(|b| b.abs()).fold(1.0, f64::max);
    (0..fit.coefficients.len())
        .map(|j| {
            let v = cov[(j, j)];
            if v > 1e-28 * scale * scale && v.is_finite() {
                Ok(fit.coefficients[j] / v.sqrt())
            } else {
                Err(RegressError::ZeroCovariance)
            }
        })
        .collect()
}

pub const MIN_BOOTSTRAP_REPLICATIONS: usize = 100;
const BOOTSTRAP_PURPOSE: u64 = 0xB007;

/// One-sided upper-tail p-value of the slope's Newey–West t-statistic in the
/// bivariate regression of `y` on `x`.
///
/// Pseudo-samples impose `beta = 0`: `y* = mean(y) + e_t * w_t` with the
/// unrestricted residuals `e` and Rademacher weights `w`. Replication `b`
/// draws from the stream derived from `(seed, b)`, so the result does not
/// depend on scheduling.
pub fn wild_bootstrap_pvalue(y: &[f64], x: &[f64], replications: usize, seed: u64) -> Result<f64> {
    if replications < MIN_BOOTSTRAP_REPLICATIONS {
        return Err(RegressError::Config(format!(
            "{replications} bootstrap replications; at least {MIN_BOOTSTRAP_REPLICATIONS} required"
        )));
    }
    let fit = ols_fit(y, &[x])?;
    let t_obs = fit
        .hac_tstats
        .as_ref()
        .ok_or(RegressError::ZeroCovariance)?[1];
    let ybar = stats::mean(y);
    let exceed: usize = (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = stats::rng(stats::derive_seed(seed, BOOTSTRAP_PURPOSE, b as u64));
            let ystar: Vec<f64> = fit
                .residuals
                .iter()
                .map(|e| {
                    if rng.random::<bool>() {
                        ybar + e
                    } else {
                        ybar - e
                    }
                })
                .collect();
            let t = ols_fit(&ystar, &[x])
                .ok()
                .and_then(|f| f.hac_tstats)
                .map(|t| t[1]);
            usize::from(matches!(t, Some(t) if t >= t_obs))
        })
        .sum();
    Ok(exceed as f64 / replications as f64)
}

/// Standardization and leading eigenvectors of a predictor block.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `p x K`, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// All `p` correlation-matrix eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of total variance of each retained component.
    pub explained: Vec<f64>,
    pub k: usize,
}

impl PcaModel {
    pub fn scores_row(&self, row: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.means[j]) / self.stds[j])
            .collect();
        (0..self.k)
            .map(|c| {
                z.iter()
                    .enumerate()
                    .map(|(j, v)| v * self.loadings[(j, c)])
                    .sum()
            })
            .collect()
    }

    /// Component scores of the first `nobs` rows as `K` columns.
    pub fn scores(&self, cols: &[&[f64]], nobs: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(nobs); self.k];
        let mut row = vec![0.0; cols.len()];
        for t in 0..nobs {
            for (j, c) in cols.iter().enumerate() {
                row[j] = c[t];
            }
            for (c, s) in self.scores_row(&row).into_iter().enumerate() {
                out[c].push(s);
            }
        }
        out
    }

    /// The same model keeping only the first `k` components.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k);
        Self {
            loadings: self.loadings.columns(0, k).into_owned(),
            explained: self.explained[..k].to_vec(),
            k,
            ..self.clone()
        }
    }
}

/// Principal components of the first `nobs` rows of `cols`, standardized
/// with the `n - 1` standard deviation. Each loading vector is signed so its
/// largest-magnitude entry is positive.
pub fn pca_extract(cols: &[&[f64]], nobs: usize, k: usize) -> Result<PcaModel> {
    let p = cols.len();
    if k == 0 || k > p {
        return Err(RegressError::Config(format!("K = {k} outside 1..={p}")));
    }
    if nobs <= p {
        return Err(RegressError::TooFewObservations { nobs, ncols: p });
    }
    let mut z = DMatrix::zeros(nobs, p);
    let mut means = Vec::with_capacity(p);
    let mut stds = Vec::with_capacity(p);
    for (j, c) in cols.iter().enumerate() {
        if c.len() < nobs {
            return Err(RegressError::Length {
                expected: nobs,
                got: c.len(),
            });
        }
        let c = &c[..nobs];
        let m = stats::mean(c);
        // centring on the first value keeps constant columns exactly constant
        let sd = stats::sample_std(&c.iter().map(|v| v - c[0]).collect::<Vec<_>>());
        if !(sd > 0.0) {
            return Err(RegressError::ZeroVariance(j));
        }
        for (i, v) in c.iter().enumerate() {
            z[(i, j)] = (v - m) / sd;
        }
        means.push(m);
        stds.push(sd);
    }
    let corr = (z.transpose() * &z) / (nobs as f64 - 1.0);
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut loadings = DMatrix::zeros(p, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(i);
        let lead = (0..p).fold(
            0,
            |best, j| if v[j].abs() > v[best].abs() { j } else { best },
        );
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            loadings[(j, c)] = sign * v[j];
        }
    }
    let total: f64 = eigenvalues.iter().sum();
    let explained = eigenvalues[..k]
        .iter()
        .map(|e| e.max(0.0) / total)
        .collect();
    Ok(PcaModel {
        means,
        stds,
        loadings,
        eigenvalues,
        explained,
        k,
    })
}

/// Selected principal-component regression.
#[derive(Debug, Clone, PartialEq)]
pub struct PcRegression {
    pub fit: OlsFit,
    pub pca: PcaModel,
    /// Adjusted R-squared for `K = 1..=K_max` (`NaN` where the fit failed).
    pub adjusted_by_k: Vec<f64>,
}

/// Regresses `y[i]` on the first `K` component scores of row `i` for each
/// `K` in `1..=k_max` and keeps the highest adjusted R-squared; ties go to
/// the smaller `K`.
pub fn pc_regression(y: &[f64], cols: &[&[f64]], k_max: usize) -> Result<PcRegression> {
    if k_max == 0 {
        return Err(RegressError::Config("K_max must be at least 1".into()));
    }
    let nobs = y.len();
    let k_max = k_max.min(cols.len());
    let full = pca_extract(cols, nobs, k_max)?;
    let scores = full.scores(cols, nobs);
    let mut best: Option<(OlsFit, usize)> = None;
    let mut adjusted_by_k = Vec::with_capacity(k_max);
    let mut first_err = None;
    for k in 1..=k_max {
        let xs: Vec<&[f64]> = scores[..k].iter().map(|c| c.as_slice()).collect();
        match ols_fit(y, &xs) {
            Ok(fit) => {
                adjusted_by_k.push(fit.adjusted_r2);
                if best
                    .as_ref()
                    .is_none_or(|(b, _)| fit.adjusted_r2 > b.adjusted_r2)
                {
                    best = Some((fit, k));
                }
            }
            Err(e) => {
                adjusted_by_k.push(f64::NAN);
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((fit, k)) => Ok(PcRegression {
            fit,
            pca: full.truncated(k),
            adjusted_by_k,
        }),
        None => Err(first_err.expect("at least one K was tried")),
    }
}
