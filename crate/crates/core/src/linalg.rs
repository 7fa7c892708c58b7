//! Dense least squares via Householder QR with column pivoting.

use crate::error::{Error, Result};

/// Relative tolerance on `|R_kk| / |R_00|` below which a column is treated as
/// linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { nrows, ncols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { nrows: idx.len(), ncols: self.ncols, data }
    }

    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| dot(self.row(i), beta)).collect()
    }

    /// `X^T v`
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let vi = v[i];
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += x * vi;
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `min ||W^{1/2}(X beta - y)||` by pivoted QR.
///
/// Fails with [`Error::SingularDesign`] naming the first column (in original
/// order) found to be numerically dependent.
pub fn weighted_least_squares(x: &Matrix, y: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let m = x.nrows;
    let p = x.ncols;
    assert_eq!(y.len(), m);
    if p == 0 {
        return Ok(Vec::new());
    }
    if m < p {
        return Err(Error::SingularDesign { column: m });
    }

    // Column-major working copy with rows scaled by sqrt(w).
    let sw: Vec<f64> = match weights {
        Some(w) => w.iter().map(|v| v.max(0.0).sqrt()).collect(),
        None => vec![1.0; m],
    };
    let mut a = vec![0.0; m * p];
    for i in 0..m {
        let r = x.row(i);
        for j in 0..p {
            a[j * m + i] = r[j] * sw[i];
        }
    }
    let mut rhs: Vec<f64> = y.iter().zip(&sw).map(|(v, s)| v * s).collect();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut norms: Vec<f64> = (0..p).map(|j| col_norm2(&a[j * m..(j + 1) * m])).collect();
    let mut r_diag = vec![0.0; p];
    let mut first_diag = 0.0;

    for k in 0..p {
        // Pivot: remaining column with the largest residual norm.
        let (best, _) = norms[k..]
            .iter()
            .enumerate()
            .fold((k, f64::NEG_INFINITY), |acc, (o, &v)| if v > acc.1 { (k + o, v) } else { acc });
        if best != k {
            for i in 0..m {
                a.swap(k * m + i, best * m + i);
            }
            norms.swap(k, best);
            perm.swap(k, best);
        }

        let col = &mut a[k * m..(k + 1) * m];
        let sub_norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if k == 0 {
            first_diag = sub_norm;
        }
        if first_diag == 0.0 || sub_norm <= RANK_TOL * first_diag {
            return Err(Error::SingularDesign { column: perm[k] });
        }
        let alpha = if col[k] > 0.0 { -sub_norm } else { sub_norm };
        col[k] -= alpha;
        let vnorm2: f64 = col[k..].iter().map(|v| v * v).sum();
        r_diag[k] = alpha;

        // Apply H = I - 2 v v^T / (v^T v) to trailing columns and the rhs.
        let v: Vec<f64> = col[k..].to_vec();
        for j in (k + 1)..p {
            let cj = &mut a[j * m..(j + 1) * m];
            let s = 2.0 * dot(&v, &cj[k..]) / vnorm2;
            for (c, vi) in cj[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        let s = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
        for (c, vi) in rhs[k..].iter_mut().zip(&v) {
            *c -= s * vi;
        }
        for j in (k + 1)..p {
            norms[j] = col_norm2(&a[j * m + k + 1..(j + 1) * m]);
        }
    }

    // Back substitution on R (upper triangle stored above the diagonal, diag in r_diag).
    let mut z = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = rhs[k];
        for j in (k + 1)..p {
            s -= a[j * m + k] * z[j];
        }
        z[k] = s / r_diag[k];
    }
    let mut beta = vec![0.0; p];
    for (k, &j) in perm.iter().enumerate() {
        beta[j] = z[k];
    }
    Ok(beta)
}

#[inline]
fn col_norm2(c: &[f64]) -> f64 {
    c.iter().map(|v| v * v).sum()
}

/// Solves a small dense square system by Gaussian elimination with partial
/// pivoting. Used for normal-equation cross-checks and tiny KKT systems.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let b = weighted_least_squares(&x, &[0.0, 2.0, 4.0], None).unwrap();
        assert!((b[0]).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_dependent_column() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
        ]);
        match weighted_least_squares(&x, &[1.0, 2.0, 3.0, 4.0], None) {
            Err(Error::SingularDesign { .. }) => {}
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn weights_match_replicated_rows() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 3.0]]);
        let y = [1.0, 2.0, 2.5];
        let bw = weighted_least_squares(&x, &y, Some(&[2.0, 1.0, 1.0])).unwrap();
        let xr = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 3.0]]);
        let br = weighted_least_squares(&xr, &[1.0, 1.0, 2.0, 2.5], None).unwrap();
        for (a, b) in bw.iter().zip(&br) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }
}
