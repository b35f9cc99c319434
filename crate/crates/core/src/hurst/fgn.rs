//! Exact fractional Gaussian noise by circulant embedding (Davies–Harte).

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::HurstError;
use crate::stats;

/// Autocovariance of unit-variance fGn at lag `k`.
pub fn fgn_autocovariance(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

const MAX_DOUBLINGS: usize = 8;

/// Unit-variance fGn of the given length; deterministic for a seed.
pub fn generate_fgn(h: f64, len: usize, seed: u64) -> Result<Vec<f64>, HurstError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(HurstError::InvalidConfig(format!(
            "fGn exponent {h} outside (0, 1)"
        )));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    let mut half = len.next_power_of_two().max(2);
    for _ in 0..=MAX_DOUBLINGS {
        if let Some(eigen) = embedding_eigenvalues(h, half) {
            return Ok(synthesize(&eigen, len, seed));
        }
        half *= 2;
    }
    Err(HurstError::Embedding(h, len))
}

/// Eigenvalues of the circulant of size `2 * half`, or `None` when the
/// embedding is not nonnegative definite.
fn embedding_eigenvalues(h: f64, half: usize) -> Option<Vec<f64>> {
    let m = 2 * half;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= half { j } else { m - j };
            Complex::new(fgn_autocovariance(h, k), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let mut eig = Vec::with_capacity(m);
    for c in row {
        if c.re < -1e-10 * max {
            return None;
        }
        eig.push(c.re.max(0.0));
    }
    Some(eig)
}

fn synthesize(eigen: &[f64], len: usize, seed: u64) -> Vec<f64> {
    let m = eigen.len();
    let half = m / 2;
    let mf = m as f64;
    let mut rng = stats::rng(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut w = vec![Complex::new(0.0, 0.0); m];
    w[0] = Complex::new((eigen[0] / mf).sqrt() * normal(), 0.0);
    w[half] = Complex::new((eigen[half] / mf).sqrt() * normal(), 0.0);
    for k in 1..half {
        let scale = (eigen[k] / (2.0 * mf)).sqrt();
        let (a, b) = (normal(), normal());
        w[k] = Complex::new(scale * a, scale * b);
        w[m - k] = w[k].conj();
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut w);
    w.into_iter().take(len).map(|c| c.re).collect()
}
