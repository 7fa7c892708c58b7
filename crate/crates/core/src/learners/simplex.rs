//! Least squares over the probability simplex for small libraries.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Largest library handled by exhaustive active-set enumeration.
pub const MAX_MEMBERS: usize = 6;

/// Minimises `||y - Z w||^2` subject to `w >= 0`, `sum w = 1`.
///
/// Every support set is tried: on each, the equality-constrained problem is
/// solved by eliminating the last weight, and feasible solutions are compared
/// by residual sum of squares. Some optimum always has affinely independent
/// support, so supports with singular reduced systems can be skipped.
pub fn simplex_least_squares(z: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let l = z.ncols;
    if l == 0 {
        return Err(Error::InvalidParameter("empty library".into()));
    }
    if l > MAX_MEMBERS {
        return Err(Error::InvalidParameter(format!(
            "simplex solver supports at most {MAX_MEMBERS} members, got {l}"
        )));
    }
    let n = z.nrows;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << l) {
        let support: Vec<usize> = (0..l).filter(|j| mask & (1 << j) != 0).collect();
        let Some(w) = solve_on_support(z, y, &support) else { continue };
        let rss: f64 = (0..n)
            .map(|i| {
                let r = z.row(i);
                let fit: f64 = w.iter().zip(r).map(|(a, b)| a * b).sum();
                (y[i] - fit).powi(2)
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| rss < *b - 1e-13 * (1.0 + b.abs())) {
            best = Some((rss, w));
        }
    }
    best.map(|(_, w)| w).ok_or_else(|| Error::InvalidParameter("no feasible simplex weights".into()))
}

fn solve_on_support(z: &Matrix, y: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let l = z.ncols;
    let mut w = vec![0.0; l];
    let (&last, rest) = support.split_last()?;
    if rest.is_empty() {
        w[last] = 1.0;
        return Some(w);
    }
    // y - z_last = sum_{j in rest} w_j (z_j - z_last)
    let n = z.nrows;
    let mut d = Matrix::zeros(n, rest.len());
    let mut t = vec![0.0; n];
    for i in 0..n {
        let r = z.row(i);
        t[i] = y[i] - r[last];
        for (c, &j) in rest.iter().enumerate() {
            d.data[i * rest.len() + c] = r[j] - r[last];
        }
    }
    let coef = linalg::weighted_least_squares(&d, &t, None).ok()?;
    let mut sum = 0.0;
    for (&j, &c) in rest.iter().zip(&coef) {
        if c < -1e-12 {
            return None;
        }
        w[j] = c.max(0.0);
        sum += w[j];
    }
    let wl = 1.0 - sum;
    if wl < -1e-12 {
        return None;
    }
    w[last] = wl.max(0.0);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Some(w)
}
