//! Feature expansions used by the parametric learners.

use crate::linalg::Matrix;

/// Knot positions, as training quantiles, of the natural cubic spline used
/// for each covariate of the additive basis.
pub const KNOT_QUANTILES: [f64; 5] = [0.05, 0.275, 0.5, 0.725, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// `(1, x)`
    Linear,
    /// `(1, x, x_j x_k for j < k)`
    Interactions,
    /// Intercept plus a natural cubic spline per covariate.
    Additive(Vec<SplineTerm>),
}

/// Per-covariate piece of the additive basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineTerm {
    pub column: usize,
    /// Polynomial degree (1..=3) used when there are too few knots for a
    /// natural spline.
    pub degree: usize,
    /// Natural spline knots (at least three) or empty.
    pub knots: Vec<f64>,
}

impl FeatureMap {
    /// Builds an additive basis with natural cubic splines (linear beyond
    /// the outer knots) whose knots sit at fixed training quantiles.
    ///
    /// Covariates with few distinct values get a reduced basis so that the
    /// expansion stays identifiable: no terms for a constant column, and a
    /// polynomial of degree `min(d - 1, 3)` when fewer than three distinct
    /// knots are available.
    pub fn additive_from_data(x: &Matrix) -> Self {
        let mut terms = Vec::new();
        for j in 0..x.ncols {
            let mut v: Vec<f64> = (0..x.nrows).map(|i| x.get(i, j)).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            let mut distinct = v.clone();
            distinct.dedup();
            let d = distinct.len();
            if d <= 1 {
                continue;
            }
            let mut knots: Vec<f64> = Vec::new();
            if d > 4 {
                for q in KNOT_QUANTILES {
                    let k = quantile_sorted(&v, q);
                    if knots.last().is_none_or(|&last| k > last) {
                        knots.push(k);
                    }
                }
            }
            if knots.len() < 3 {
                knots.clear();
            }
            let degree = if knots.is_empty() { (d - 1).min(3) } else { 1 };
            terms.push(SplineTerm { column: j, degree, knots });
        }
        FeatureMap::Additive(terms)
    }

    pub fn expand_row(&self, w: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        match self {
            FeatureMap::Linear => out.extend_from_slice(w),
            FeatureMap::Interactions => {
                out.extend_from_slice(w);
                for j in 0..w.len() {
                    for k in (j + 1)..w.len() {
                        out.push(w[j] * w[k]);
                    }
                }
            }
            FeatureMap::Additive(terms) => {
                for t in terms {
                    let x = w[t.column];
                    let mut p = 1.0;
                    for _ in 0..t.degree {
                        p *= x;
                        out.push(p);
                    }
                    if let [.., penultimate, last] = t.knots[..] {
                        let d = |k: f64| (cube_pos(x - k) - cube_pos(x - last)) / (last - k);
                        let d_pen = d(penultimate);
                        for &k in &t.knots[..t.knots.len() - 2] {
                            out.push(d(k) - d_pen);
                        }
                    }
                }
            }
        }
    }

    pub fn expand(&self, x: &Matrix) -> Matrix {
        let mut row = Vec::new();
        let mut data = Vec::new();
        let mut ncols = 0;
        for i in 0..x.nrows {
            self.expand_row(x.row(i), &mut row);
            ncols = row.len();
            data.extend_from_slice(&row);
        }
        if x.nrows == 0 {
            self.expand_row(&vec![0.0; x.ncols], &mut row);
            ncols = row.len();
        }
        Matrix { nrows: x.nrows, ncols, data }
    }
}

fn cube_pos(r: f64) -> f64 {
    let r = r.max(0.0);
    r * r * r
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
