//! Least squares and logistic IRLS fits on an explicit design matrix.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::link::{expit, LinkKind, LinkSpec};

pub const IRLS_MAX_ITER: usize = 100;
pub const IRLS_SCORE_TOL: f64 = 1e-8;
pub const IRLS_MAX_NORM: f64 = 1e3;
pub const IRLS_MAX_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFit {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Ordinary least squares by pivoted QR.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<CoefficientFit> {
    let beta = linalg::weighted_least_squares(x, y, None)?;
    Ok(CoefficientFit { beta, converged: true, iterations: 1 })
}

/// Solves the logistic score equation `sum (y_i - expit(x_i' beta)) x_i = 0`
/// by iteratively reweighted least squares with step halving.
pub fn fit_glm_irls(x: &Matrix, y: &[f64], link: &LinkSpec) -> Result<CoefficientFit> {
    if link.kind != LinkKind::Logit {
        return Err(Error::InvalidParameter(format!("IRLS supports the logit link only, got {}", link.kind)));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidParameter(format!("binary outcome expected, found {bad}")));
    }
    let p = x.ncols;
    let mut beta = vec![0.0; p];
    let mut dev = deviance(x, y, &beta);
    let mut polished = false;

    for it in 0..=IRLS_MAX_ITER {
        let eta = x.mul_vec(&beta);
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let score = x.t_mul_vec(&resid);
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        // One extra Newton step after reaching the tolerance; convergence is
        // quadratic there so it costs little and tightens beta considerably.
        if max_score <= IRLS_SCORE_TOL && (polished || max_score < 1e-13 || it == IRLS_MAX_ITER) {
            // A vanishing score with fitted probabilities numerically 0 or 1
            // means the likelihood is maximised at infinity.
            if eta.iter().any(|e| e.abs() > IRLS_MAX_ETA) {
                return Err(separation("fitted probabilities numerically 0 or 1", it));
            }
            return Ok(CoefficientFit { beta, converged: true, iterations: it });
        }
        if it == IRLS_MAX_ITER {
            break;
        }
        if max_score <= IRLS_SCORE_TOL {
            polished = true;
        }
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        if w.iter().all(|&v| v < 1e-12) {
            return Err(separation("fitted probabilities collapsed to 0/1", it));
        }
        let z: Vec<f64> = eta
            .iter()
            .zip(&resid)
            .zip(&w)
            .map(|((e, r), wi)| e + r / wi.max(1e-300))
            .collect();
        let target = match linalg::weighted_least_squares(x, &z, Some(&w)) {
            Ok(b) => b,
            Err(Error::SingularDesign { column }) => {
                return Err(separation(&format!("weighted design singular at column {column}"), it))
            }
            Err(e) => return Err(e),
        };

        // Newton step with halving until the deviance does not increase.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&target).map(|(b, t)| b + step * (t - b)).collect();
            let d = deviance(x, y, &cand);
            if d.is_finite() && d <= dev + 1e-12 * (1.0 + dev.abs()) {
                accepted = Some((cand, d));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, d)) = accepted else {
            return Err(separation("step halving failed", it));
        };
        beta = cand;
        dev = d;
        if beta.iter().map(|b| b * b).sum::<f64>().sqrt() > IRLS_MAX_NORM {
            return Err(separation("coefficient norm diverged", it + 1));
        }
    }
    Err(separation("iteration cap reached", IRLS_MAX_ITER))
}

fn separation(reason: &str, iterations: usize) -> Error {
    Error::Separation { reason: reason.to_string(), iterations }
}

fn deviance(x: &Matrix, y: &[f64], beta: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..x.nrows {
        let eta = linalg::dot(x.row(i), beta);
        // log(1 + exp(eta)) - y * eta, computed stably
        let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        d += softplus - y[i] * eta;
    }
    2.0 * d
}
