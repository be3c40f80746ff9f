use nalgebra::{DMatrix, DVector};

use super::linalg::{self, with_intercept};
use super::ols::{check_lengths, report_from};
use super::{Column, EconError, EstimateReport, SeFlavor};

const MOMENT_TOL: f64 = 1e-11;
const MAX_ITER: usize = 200;

struct Moments {
    /// Per-observation residual `y exp(-x'b) - 1`.
    r: DVector<f64>,
    /// Mean moment vector.
    g: DVector<f64>,
}

fn moments(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>, beta: &DVector<f64>) -> Moments {
    let n = y.len() as f64;
    let xb = x * beta;
    let r = DVector::from_iterator(y.len(), y.iter().zip(xb.iter()).map(|(yi, t)| yi * (-t).exp() - 1.0));
    let g = z.transpose() * &r / n;
    Moments { r, g }
}

/// Jacobian of the mean moments, `-(1/n) Z' diag(y exp(-x'b)) X`.
fn jacobian(r: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut xw = x.clone();
    for (i, ri) in r.iter().enumerate() {
        xw.row_mut(i).scale_mut(ri + 1.0);
    }
    -(z.transpose() * xw) / n
}

fn norm(g: &DVector<f64>) -> f64 {
    let v = g.amax();
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Just-identified IV-Poisson GMM for `y = exp(X b) eta`, `E[eta | Z] = 1`,
/// solved by damped Newton from `ln(mean y)`. Sandwich standard errors; the
/// final moment max-norm is in `diagnostics.moment_norm`.
pub fn iv_poisson_gmm(
    y: &Column,
    treatments: &[&Column],
    instruments: &[&Column],
    controls: &[&Column],
) -> Result<EstimateReport, EconError> {
    if instruments.len() != treatments.len() {
        return Err(EconError::InvalidDesign(format!(
            "{} instruments for {} endogenous regressors; the estimator is just-identified",
            instruments.len(),
            treatments.len()
        )));
    }
    let all: Vec<&Column> = treatments.iter().chain(instruments).chain(controls).copied().collect();
    let n = check_lengths(y, &all)?;
    if y.values.iter().any(|v| *v < 0.0) {
        return Err(EconError::NegativeCounts);
    }
    let mean = y.values.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return Err(EconError::InvalidDesign("count outcome is identically zero".into()));
    }
    let x_cols: Vec<&Column> = treatments.iter().chain(controls).copied().collect();
    let z_cols: Vec<&Column> = instruments.iter().chain(controls).copied().collect();
    let (x, labels) = with_intercept(&x_cols, n);
    let (z, zlabels) = with_intercept(&z_cols, n);
    linalg::lstsq(&x, &DVector::zeros(n), &labels)?;
    linalg::lstsq(&z, &DVector::zeros(n), &zlabels)?;
    let yv = DVector::from_column_slice(&y.values);

    let k = x.ncols();
    let mut beta = DVector::zeros(k);
    beta[0] = mean.ln();
    let mut m = moments(&yv, &x, &z, &beta);
    let mut crit = norm(&m.g);
    let mut iter = 0;
    while crit >= MOMENT_TOL {
        iter += 1;
        if iter > MAX_ITER {
            return Err(EconError::NoConvergence { iterations: MAX_ITER, criterion: crit });
        }
        let jac = jacobian(&m.r, &x, &z);
        let step = jac
            .lu()
            .solve(&(-&m.g))
            .ok_or_else(|| EconError::WeakOrZeroFirstStage(treatments[0].label.clone()))?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let cand = &beta + &step * t;
            let cm = moments(&yv, &x, &z, &cand);
            let cc = norm(&cm.g);
            if cc < crit {
                beta = cand;
                m = cm;
                crit = cc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return Err(EconError::NoConvergence { iterations: iter, criterion: crit });
        }
    }

    let jac = jacobian(&m.r, &x, &z);
    let jinv = jac
        .try_inverse()
        .ok_or_else(|| EconError::WeakOrZeroFirstStage(treatments[0].label.clone()))?;
    let mut zr = z.clone();
    for (i, ri) in m.r.iter().enumerate() {
        zr.row_mut(i).scale_mut(*ri);
    }
    let s = zr.transpose() * &zr / n as f64;
    let cov = &jinv * s * jinv.transpose() / n as f64;
    let mut report = report_from(labels, &beta, &cov, SeFlavor::Sandwich, n);
    report.diagnostics.moment_norm = Some(crit);
    Ok(report)
}
