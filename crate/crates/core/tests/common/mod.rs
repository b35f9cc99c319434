//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's numerics.
#![allow(dead_code)]
// loops keep the textbook index form
#![allow(clippy::needless_range_loop)]

use std::path::PathBuf;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Direct-loop fluctuation function with 1-based indexing kept literal.
pub fn direct_fluctuation(r: &[f64], n: usize, minus_one: bool) -> f64 {
    let big_n = r.len();
    let mut y = vec![0.0; big_n + 1];
    for i in 1..=big_n {
        y[i] = y[i - 1] + r[i - 1];
    }
    let mut eps = vec![0.0; big_n + 1];
    for i in n..=big_n {
        let mut s = 0.0;
        for k in 0..n {
            s += y[i - k];
        }
        eps[i] = y[i] - s / n as f64;
    }
    let available = (big_n - n + 1) / n;
    let nominal = if minus_one {
        big_n / (n - 1)
    } else {
        big_n / n
    };
    let count = nominal.min(available);
    let mut total = 0.0;
    for v in 1..=count {
        let mut f2 = 0.0;
        for j in 1..=n {
            let i = n + (v - 1) * n + j - 1;
            f2 += eps[i] * eps[i];
        }
        total += f2 / n as f64;
    }
    (total / count as f64).sqrt()
}

/// Least-squares slope of `ys` on `xs` from the textbook formula.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// OLS coefficients (intercept first) from the normal equations.
pub fn normal_equations(y: &[f64], xs: &[&[f64]]) -> Vec<f64> {
    let p = xs.len() + 1;
    let row = |t: usize| -> Vec<f64> {
        std::iter::once(1.0)
            .chain(xs.iter().map(|c| c[t]))
            .collect()
    };
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for t in 0..y.len() {
        let r = row(t);
        for i in 0..p {
            xty[i] += r[i] * y[t];
            for j in 0..p {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    gauss_solve(xtx, xty)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Correlation matrix of the columns with `n - 1` normalization.
pub fn correlation(cols: &[&[f64]]) -> Vec<Vec<f64>> {
    let t = cols[0].len() as f64;
    let z: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / t;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
            c.iter().map(|v| (v - m) / sd).collect()
        })
        .collect();
    let k = cols.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            out[i][j] = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum::<f64>() / (t - 1.0);
        }
    }
    out
}

/// Lag-1 sample autocovariance about the known zero mean, scaled by the
/// lag-0 value.
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let c0: f64 = x.iter().map(|v| v * v).sum();
    let c1: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
    c1 / c0
}

/// Indices where `mask` is set.
pub fn on(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|p| *p.1)
        .map(|p| p.0)
        .collect()
}

/// Every regular file below `dir`, relative path and contents, sorted.
pub fn tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Adjusted R-squared of the OLS fit with intercept from the normal equations.
pub fn adjusted_r2(y: &[f64], xs: &[&[f64]]) -> f64 {
    let b = normal_equations(y, xs);
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for t in 0..y.len() {
        let fit = b[0] + xs.iter().zip(&b[1..]).map(|(c, bj)| c[t] * bj).sum::<f64>();
        sse += (y[t] - fit).powi(2);
        sst += (y[t] - my).powi(2);
    }
    1.0 - (sse / (n - xs.len() as f64 - 1.0)) / (sst / (n - 1.0))
}
