//! GARCH(1,1) Gaussian quasi-maximum-likelihood fit and the standardized
//! residual filter applied to daily returns before Hurst estimation.
//!
//! The fit runs on the returns standardized by their sample mean and
//! standard deviation, so the estimates are exactly scale-equivariant; the
//! parameters are mapped back to the original units afterwards. The
//! optimizer is BFGS ascent over an unconstrained reparameterization
//!
//! ```text
//! omega = exp(v)
//! alpha = s * q,  beta = s * (1 - q),  s = logistic(u1),  q = logistic(u2)
//! ```
//!
//! which keeps `omega > 0`, `alpha, beta >= 0` and `alpha + beta < 1`.

use serde::{Deserialize, Serialize};

use crate::marketdata::ReturnSeries;
use crate::stats;

pub const MIN_OBSERVATIONS: usize = 250;
const MAX_ITERATIONS: usize = 500;
const GRADIENT_TOLERANCE: f64 = 1e-6;
/// (alpha, beta) starting points; omega starts at the matching
/// unconditional variance.
const STARTS: [(f64, f64); 3] = [(0.05, 0.90), (0.10, 0.80), (0.02, 0.50)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub mu: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub loglik: f64,
}

impl GarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GarchError {
    #[error("GARCH fit needs at least {MIN_OBSERVATIONS} returns, got {0}")]
    TooShort(usize),
    #[error("returns have zero variance")]
    ZeroVariance,
    #[error(
        "GARCH fit did not converge in {iterations} iterations (gradient norm {gradient_norm:.3e})"
    )]
    NonConvergence {
        best: GarchParams,
        iterations: usize,
        gradient_norm: f64,
    },
}

/// Natural parameters on the standardized scale.
#[derive(Debug, Clone, Copy)]
struct Natural {
    mu: f64,
    omega: f64,
    alpha: f64,
    beta: f64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_natural(theta: &[f64; 4]) -> Natural {
    let s = logistic(theta[2]);
    let q = logistic(theta[3]);
    Natural {
        mu: theta[0],
        omega: theta[1].exp(),
        alpha: s * q,
        beta: s * (1.0 - q),
    }
}

fn from_natural(p: Natural) -> [f64; 4] {
    let s = p.alpha + p.beta;
    [p.mu, p.omega.ln(), logit(s), logit(p.alpha / s)]
}

/// Mean Gaussian log-likelihood and its gradient w.r.t. the transformed
/// parameters. `sigma2_init` seeds the variance recursion.
fn loglik_and_gradient(z: &[f64], sigma2_init: f64, theta: &[f64; 4]) -> (f64, [f64; 4]) {
    let p = to_natural(theta);
    let n = z.len() as f64;
    let mut ll = 0.0;
    // d(loglik)/d(mu, omega, alpha, beta)
    let mut g = [0.0; 4];
    let mut sigma2 = sigma2_init;
    // d(sigma2)/d(mu, omega, alpha, beta)
    let mut ds = [0.0; 4];
    let mut prev_e = 0.0;
    for (t, &x) in z.iter().enumerate() {
        if t > 0 {
            let prev_sigma2 = sigma2;
            sigma2 = p.omega + p.alpha * prev_e * prev_e + p.beta * prev_sigma2;
            ds = [
                -2.0 * p.alpha * prev_e + p.beta * ds[0],
                1.0 + p.beta * ds[1],
                prev_e * prev_e + p.beta * ds[2],
                prev_sigma2 + p.beta * ds[3],
            ];
        }
        let e = x - p.mu;
        let e2 = e * e;
        ll -= 0.5 * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln() + e2 / sigma2);
        let common = -0.5 * (1.0 / sigma2 - e2 / (sigma2 * sigma2));
        for k in 0..4 {
            g[k] += common * ds[k];
        }
        g[0] += e / sigma2;
        prev_e = e;
    }
    let s = p.alpha + p.beta;
    let q = if s > 0.0 { p.alpha / s } else { 0.5 };
    let ds_du1 = s * (1.0 - s);
    let dq_du2 = q * (1.0 - q);
    let grad = [
        g[0] / n,
        g[1] * p.omega / n,
        (g[2] * q + g[3] * (1.0 - q)) * ds_du1 / n,
        (g[2] - g[3]) * s * dq_du2 / n,
    ];
    (ll / n, grad)
}

fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Ascent {
    theta: [f64; 4],
    value: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

/// BFGS ascent with Armijo backtracking; each accepted step raises the
/// objective.
fn bfgs_ascent(z: &[f64], sigma2_init: f64, start: [f64; 4]) -> Ascent {
    let eval = |th: &[f64; 4]| loglik_and_gradient(z, sigma2_init, th);
    let mut theta = start;
    let (mut f, mut g) = eval(&theta);
    // inverse Hessian approximation of the negated objective
    let mut h = [[0.0; 4]; 4];
    let reset = |h: &mut [[f64; 4]; 4]| {
        *h = [[0.0; 4]; 4];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
    };
    reset(&mut h);
    let mut iterations = 0;
    let mut fresh = true;
    while iterations < MAX_ITERATIONS {
        if norm(&g) < GRADIENT_TOLERANCE {
            return Ascent {
                theta,
                value: f,
                gradient_norm: norm(&g),
                iterations,
                converged: true,
            };
        }
        iterations += 1;
        let mut dir = [0.0; 4];
        for i in 0..4 {
            dir[i] = (0..4).map(|j| h[i][j] * g[j]).sum();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope > 0.0) {
            reset(&mut h);
            dir = g;
            slope = norm(&g).powi(2);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: [f64; 4] = std::array::from_fn(|i| theta[i] + step * dir[i]);
            let (fc, gc) = eval(&cand);
            if fc.is_finite() && fc >= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            if fresh {
                break;
            }
            reset(&mut h);
            fresh = true;
            continue;
        };
        fresh = false;
        let s: [f64; 4] = std::array::from_fn(|i| cand[i] - theta[i]);
        // gradient of the negated objective changes by -(gc - g)
        let y: [f64; 4] = std::array::from_fn(|i| -(gc[i] - g[i]));
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: [f64; 4] = std::array::from_fn(|i| (0..4).map(|j| h[i][j] * y[j]).sum());
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..4 {
                for j in 0..4 {
                    h[i][j] +=
                        (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        theta = cand;
        f = fc;
        g = gc;
    }
    let gn = norm(&g);
    Ascent {
        theta,
        value: f,
        gradient_norm: gn,
        iterations,
        converged: gn < GRADIENT_TOLERANCE,
    }
}

/// Gaussian QMLE of a GARCH(1,1) with constant mean.
pub fn fit_garch11(returns: &ReturnSeries) -> Result<GarchParams, GarchError> {
    let x = &returns.values;
    if x.len() < MIN_OBSERVATIONS {
        return Err(GarchError::TooShort(x.len()));
    }
    let m0 = stats::mean(x);
    let s0 = stats::sample_std(x);
    if !(s0 > 1e-300) || !s0.is_finite() || s0 <= m0.abs() * 1e-14 {
        return Err(GarchError::ZeroVariance);
    }
    let z: Vec<f64> = x.iter().map(|v| (v - m0) / s0).collect();
    let sigma2_init = stats::sample_variance(&z);

    let mut best: Option<Ascent> = None;
    for (alpha, beta) in STARTS {
        let start = from_natural(Natural {
            mu: 0.0,
            omega: 1.0 - alpha - beta,
            alpha,
            beta,
        });
        let run = bfgs_ascent(&z, sigma2_init, start);
        let better = match &best {
            None => true,
            Some(b) => {
                (run.converged && !b.converged)
                    || (run.converged == b.converged && run.value > b.value)
            }
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let p = to_natural(&best.theta);
    let params = GarchParams {
        mu: m0 + s0 * p.mu,
        omega: p.omega * s0 * s0,
        alpha: p.alpha,
        beta: p.beta,
        loglik: best.value * z.len() as f64 - z.len() as f64 * s0.ln(),
    };
    if best.converged {
        Ok(params)
    } else {
        Err(GarchError::NonConvergence {
            best: params,
            iterations: best.iterations,
            gradient_norm: best.gradient_norm,
        })
    }
}

/// Conditional variances `sigma2_t = omega + alpha e_{t-1}^2 + beta sigma2_{t-1}`
/// seeded with the unconditional variance.
pub fn conditional_variances(x: &[f64], p: &GarchParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut sigma2 = p.unconditional_variance();
    for t in 0..x.len() {
        if t > 0 {
            let e = x[t - 1] - p.mu;
            sigma2 = p.omega + p.alpha * e * e + p.beta * sigma2;
        }
        out.push(sigma2);
    }
    out
}

/// Standardized residuals `(r_t - mu) / sigma_t`.
pub fn filter_returns(returns: &ReturnSeries, params: &GarchParams) -> ReturnSeries {
    let sig = conditional_variances(&returns.values, params);
    ReturnSeries {
        dates: returns.dates.clone(),
        values: returns
            .values
            .iter()
            .zip(&sig)
            .map(|(r, s2)| (r - params.mu) / s2.sqrt())
            .collect(),
    }
}

/// Gaussian log-likelihood of `x` under `p`, with the recursion seeded by the
/// sample variance as in the fit.
pub fn log_likelihood(x: &[f64], p: &GarchParams) -> f64 {
    let mut sigma2 = stats::sample_variance(x);
    let mut ll = 0.0;
    for t in 0..x.len() {
        if t > 0 {
            let e = x[t - 1] - p.mu;
            sigma2 = p.omega + p.alpha * e * e + p.beta * sigma2;
        }
        let e = x[t] - p.mu;
        ll -= 0.5 * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln() + e * e / sigma2);
    }
    ll
}

/// Simulates a GARCH(1,1) path with Gaussian innovations; the first
/// variance is the unconditional one.
pub fn simulate_garch11(p: &GarchParams, len: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = stats::rng(seed);
    let mut sigma2 = p.unconditional_variance();
    let mut prev_e = 0.0;
    (0..len)
        .map(|t| {
            if t > 0 {
                sigma2 = p.omega + p.alpha * prev_e * prev_e + p.beta * sigma2;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            prev_e = sigma2.sqrt() * z;
            p.mu + prev_e
        })
        .collect()
}
