use nalgebra::{DMatrix, DVector};

use super::linalg::{self, with_intercept};
use super::{two_sided_p, Coefficient, Column, Diagnostics, EconError, EstimateReport, SeFlavor};

/// Residuals below this fraction of `|y|` are treated as an exact fit.
const EXACT_FIT_TOL: f64 = 1e-13;

pub(crate) struct OlsParts {
    pub report: EstimateReport,
    pub resid: DVector<f64>,
}

pub(crate) fn check_lengths(y: &Column, cols: &[&Column]) -> Result<usize, EconError> {
    let n = y.len();
    if n == 0 {
        return Err(EconError::EmptyInput);
    }
    for c in cols {
        if c.len() != n {
            return Err(EconError::InvalidDesign(format!("column {} has {} rows, expected {n}", c.label, c.len())));
        }
    }
    Ok(n)
}

pub(crate) fn report_from(
    labels: Vec<String>,
    beta: &DVector<f64>,
    cov: &DMatrix<f64>,
    flavor: SeFlavor,
    n: usize,
) -> EstimateReport {
    let coefficients = labels
        .into_iter()
        .enumerate()
        .map(|(j, label)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            Coefficient { label, estimate: beta[j], std_error: se, p_value: two_sided_p(beta[j], se), ci: None }
        })
        .collect();
    EstimateReport {
        coefficients,
        se_flavor: flavor,
        diagnostics: Diagnostics::default(),
        n_used: n,
        dof: n.saturating_sub(beta.len()),
        seed: None,
        covariance: linalg::to_rows(cov),
    }
}

pub(crate) fn fit(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    labels: Vec<String>,
    flavor: SeFlavor,
) -> Result<OlsParts, EconError> {
    let ls = linalg::lstsq(x, y, &labels)?;
    let mut resid = y - x * &ls.beta;
    if resid.norm() <= EXACT_FIT_TOL * y.norm() {
        resid.fill(0.0);
    }
    let n = x.nrows();
    let dof = n.saturating_sub(x.ncols());
    let cov = match flavor {
        SeFlavor::Homoskedastic => linalg::homoskedastic(&resid, &ls.xtx_inv, dof),
        _ => linalg::hc1(x, &resid, &ls.xtx_inv),
    };
    let report = report_from(labels, &ls.beta, &cov, flavor, n);
    Ok(OlsParts { report, resid })
}

/// OLS of `y` on an intercept and `regressors`.
pub fn ols(y: &Column, regressors: &[&Column], flavor: SeFlavor) -> Result<EstimateReport, EconError> {
    let n = check_lengths(y, regressors)?;
    let (x, labels) = with_intercept(regressors, n);
    let yv = DVector::from_column_slice(&y.values);
    Ok(fit(&yv, &x, labels, flavor)?.report)
}

/// OLS with HC1 standard errors.
pub fn ols_hc(y: &Column, regressors: &[&Column]) -> Result<EstimateReport, EconError> {
    ols(y, regressors, SeFlavor::Hc1)
}

/// OLS with classical standard errors.
pub fn ols_homoskedastic(y: &Column, regressors: &[&Column]) -> Result<EstimateReport, EconError> {
    ols(y, regressors, SeFlavor::Homoskedastic)
}
