use nalgebra::{DMatrix, DVector};
use libm::erfc;

use super::linalg::{self, with_intercept};
use super::{two_sided_p, Coefficient, Column, Diagnostics, EconError, EstimateReport, SeFlavor};

const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse Mills ratio `phi(x) / Phi(x)`, stable far into the left tail.
pub fn inverse_mills(x: f64) -> f64 {
    if x > -30.0 {
        norm_pdf(x) / norm_cdf(x)
    } else {
        // Continued-fraction tail of Mills' ratio.
        let mut cf = 0.0;
        for k in (1..=40).rev() {
            cf = k as f64 / (-x + cf);
        }
        -x + cf
    }
}

fn ln_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-norm_cdf(-x)).ln_1p()
    } else if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        -0.5 * x * x - LN_SQRT_2PI - inverse_mills(x).ln()
    }
}

/// Probit log-likelihood at `beta` for a design that already contains the intercept.
pub fn probit_loglik(beta: &[f64], s: &[bool], x: &DMatrix<f64>) -> f64 {
    let b = DVector::from_column_slice(beta);
    let xb = x * b;
    xb.iter().zip(s).map(|(&t, &si)| if si { ln_cdf(t) } else { ln_cdf(-t) }).sum()
}

/// Analytic gradient of [`probit_loglik`].
pub fn probit_score(beta: &[f64], s: &[bool], x: &DMatrix<f64>) -> Vec<f64> {
    let b = DVector::from_column_slice(beta);
    let xb = x * b;
    let g = DVector::from_iterator(
        xb.len(),
        xb.iter().zip(s).map(|(&t, &si)| if si { inverse_mills(t) } else { -inverse_mills(-t) }),
    );
    (x.transpose() * g).iter().copied().collect()
}

/// Negative Hessian of the log-likelihood.
fn information(xb: &DVector<f64>, s: &[bool], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, (&t, &si)) in xb.iter().zip(s).enumerate() {
        let h = if si {
            let l = inverse_mills(t);
            l * (l + t)
        } else {
            let l = inverse_mills(-t);
            l * (l - t)
        };
        xw.row_mut(i).scale_mut(h);
    }
    x.transpose() * xw
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitFit {
    pub labels: Vec<String>,
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub report: EstimateReport,
}

impl ProbitFit {
    /// Linear index `x'beta` for each row of a design built with the same columns.
    pub fn index(&self, cols: &[&Column]) -> Vec<f64> {
        let n = cols.first().map_or(0, |c| c.len());
        let (x, _) = with_intercept(cols, n);
        (x * DVector::from_column_slice(&self.beta)).iter().copied().collect()
    }
}

fn check_separation(s: &[bool], x: &DMatrix<f64>, labels: &[String]) -> Result<(), EconError> {
    let ones = s.iter().filter(|v| **v).count();
    if ones == 0 || ones == s.len() {
        return Err(EconError::PerfectSeparation("outcome has a single class".into()));
    }
    for (j, label) in labels.iter().enumerate().skip(1) {
        let col = x.column(j);
        let (mut min1, mut max1, mut min0, mut max0) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (v, &si) in col.iter().zip(s) {
            if si {
                min1 = min1.min(*v);
                max1 = max1.max(*v);
            } else {
                min0 = min0.min(*v);
                max0 = max0.max(*v);
            }
        }
        if max0 < min1 || max1 < min0 {
            return Err(EconError::PerfectSeparation(format!("{label} separates the outcome")));
        }
    }
    Ok(())
}

/// Probit by Newton–Raphson with step halving. An intercept is prepended.
pub fn probit_mle(s: &[bool], regressors: &[&Column]) -> Result<ProbitFit, EconError> {
    let n = s.len();
    if n == 0 {
        return Err(EconError::EmptyInput);
    }
    if regressors.iter().any(|c| c.len() != n) {
        return Err(EconError::InvalidDesign("regressor length differs from outcome".into()));
    }
    let (x, labels) = with_intercept(regressors, n);
    check_separation(s, &x, &labels)?;
    linalg::lstsq(&x, &DVector::zeros(n), &labels)?;

    let k = x.ncols();
    let share = s.iter().filter(|v| **v).count() as f64 / n as f64;
    let mut beta = vec![0.0; k];
    beta[0] = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * share);
    let mut ll = probit_loglik(&beta, s, &x);
    let mut crit = f64::INFINITY;
    for iter in 1..=MAX_ITER {
        let score = DVector::from_vec(probit_score(&beta, s, &x));
        crit = score.amax();
        if crit < SCORE_TOL {
            return finish(beta, labels, ll, iter - 1, s, &x);
        }
        let xb = &x * DVector::from_column_slice(&beta);
        let info = information(&xb, s, &x);
        let step = info
            .clone()
            .cholesky()
            .map(|c| c.solve(&score))
            .or_else(|| info.lu().solve(&score))
            .ok_or_else(|| EconError::PerfectSeparation("singular information matrix".into()))?;
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, d)| b + t * d).collect();
            let cand_ll = probit_loglik(&cand, s, &x);
            // Near the optimum the log-likelihood change drowns in rounding.
            let slack = 1e-12 * (1.0 + ll.abs());
            if cand_ll >= ll - slack || t < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
        if ll > -1e-10 {
            return Err(EconError::PerfectSeparation("likelihood approaches one".into()));
        }
    }
    let xb = &x * DVector::from_column_slice(&beta);
    if xb.amax() > 30.0 {
        return Err(EconError::PerfectSeparation("index diverges".into()));
    }
    Err(EconError::NoConvergence { iterations: MAX_ITER, criterion: crit })
}

fn finish(
    beta: Vec<f64>,
    labels: Vec<String>,
    ll: f64,
    iterations: usize,
    s: &[bool],
    x: &DMatrix<f64>,
) -> Result<ProbitFit, EconError> {
    let xb = x * DVector::from_column_slice(&beta);
    let cov = linalg::invert(&information(&xb, s, x))
        .ok_or_else(|| EconError::PerfectSeparation("singular information matrix".into()))?;
    let coefficients = labels
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            Coefficient { label: l.clone(), estimate: beta[j], std_error: se, p_value: two_sided_p(beta[j], se), ci: None }
        })
        .collect();
    let n = s.len();
    let report = EstimateReport {
        coefficients,
        se_flavor: SeFlavor::Homoskedastic,
        diagnostics: Diagnostics::default(),
        n_used: n,
        dof: n.saturating_sub(beta.len()),
        seed: None,
        covariance: linalg::to_rows(&cov),
    };
    Ok(ProbitFit { labels, beta, log_likelihood: ll, iterations, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_and_mills() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((inverse_mills(0.0) - 2.0 * norm_pdf(0.0)).abs() < 1e-14);
        // Continuity across the tail switch.
        let a = norm_pdf(-29.999) / norm_cdf(-29.999);
        assert!((inverse_mills(-30.001) - a).abs() / a < 1e-4);
        assert!(inverse_mills(-1e3).is_finite());
    }

    #[test]
    fn intercept_only_matches_inverse_cdf() {
        let s: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let fit = probit_mle(&s, &[]).unwrap();
        let target = -0.524_400_512_708_041_2; // Phi^-1(0.3)
        assert!((fit.beta[0] - target).abs() < 1e-9);
    }

    #[test]
    fn separation_detected() {
        let x = Column::new("x", (0..20).map(|i| i as f64).collect());
        let s: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert!(matches!(probit_mle(&s, &[&x]), Err(EconError::PerfectSeparation(_))));
    }

    #[test]
    fn single_class_rejected() {
        let s = vec![true; 10];
        assert!(matches!(probit_mle(&s, &[]), Err(EconError::PerfectSeparation(_))));
    }
}
