use nalgebra::{DMatrix, DVector};

use super::{Column, EconError, INTERCEPT};

/// Relative pivot size below which a column counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Regressor matrix with a leading intercept column.
pub(crate) fn with_intercept(cols: &[&Column], n: usize) -> (DMatrix<f64>, Vec<String>) {
    let k = cols.len() + 1;
    let mut x = DMatrix::<f64>::from_element(n, k, 1.0);
    let mut labels = Vec::with_capacity(k);
    labels.push(INTERCEPT.to_string());
    for (j, c) in cols.iter().enumerate() {
        x.set_column(j + 1, &DVector::from_column_slice(&c.values));
        labels.push(c.label.clone());
    }
    (x, labels)
}

pub(crate) struct LsFit {
    pub beta: DVector<f64>,
    /// `(X'X)^{-1}`
    pub xtx_inv: DMatrix<f64>,
}

/// Least squares through a QR decomposition with a rank check.
pub(crate) fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>, labels: &[String]) -> Result<LsFit, EconError> {
    let (n, k) = x.shape();
    if n < k {
        return Err(EconError::RankDeficient(format!("{n} rows for {k} columns")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            let label = labels.get(j).cloned().unwrap_or_else(|| format!("column {j}"));
            return Err(EconError::RankDeficient(format!("{label} is collinear with earlier columns")));
        }
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| EconError::RankDeficient("singular triangular factor".into()))?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| EconError::RankDeficient("singular triangular factor".into()))?;
    let xtx_inv = &rinv * rinv.transpose();
    Ok(LsFit { beta, xtx_inv })
}

/// HC1 sandwich `n/(n-k) (X'X)^{-1} X' diag(e^2) X (X'X)^{-1}`.
pub(crate) fn hc1(x: &DMatrix<f64>, resid: &DVector<f64>, xtx_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut xe = x.clone();
    for (i, e) in resid.iter().enumerate() {
        xe.row_mut(i).scale_mut(*e);
    }
    let meat = xe.transpose() * &xe;
    let scale = if n > k { n as f64 / (n - k) as f64 } else { 1.0 };
    xtx_inv * meat * xtx_inv * scale
}

/// Classical covariance `s^2 (X'X)^{-1}` with `s^2 = e'e/(n-k)`.
pub(crate) fn homoskedastic(resid: &DVector<f64>, xtx_inv: &DMatrix<f64>, dof: usize) -> DMatrix<f64> {
    let s2 = if dof > 0 { resid.norm_squared() / dof as f64 } else { 0.0 };
    xtx_inv * s2
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Inverse of a small symmetric positive definite matrix, falling back to LU.
pub(crate) fn invert(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.inverse());
    }
    m.clone().try_inverse()
}
