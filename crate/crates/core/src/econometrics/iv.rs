use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::linalg::{self, with_intercept};
use super::ols::{self, check_lengths, report_from};
use super::{Column, EconError, EstimateReport, SeFlavor};

/// Instruments whose partial explanatory share falls below this are treated as zero.
const WEAK_TOL: f64 = 1e-12;

/// First-stage OLS of `d` on an intercept, the instruments and the controls, HC1.
pub fn first_stage(d: &Column, instruments: &[&Column], controls: &[&Column]) -> Result<EstimateReport, EconError> {
    let regs: Vec<&Column> = instruments.iter().chain(controls).copied().collect();
    ols::ols_hc(d, &regs)
}

/// Homoskedastic first-stage F for the excluded instruments; with one
/// endogenous regressor this is the Cragg–Donald statistic. Returns `+inf`
/// when the first stage fits exactly.
pub fn cragg_donald_f(d: &Column, instruments: &[&Column], controls: &[&Column]) -> Result<f64, EconError> {
    if instruments.is_empty() {
        return Err(EconError::InvalidDesign("no excluded instruments".into()));
    }
    let regs: Vec<&Column> = instruments.iter().chain(controls).copied().collect();
    let n = check_lengths(d, &regs)?;
    let (x, labels) = with_intercept(&regs, n);
    let yv = DVector::from_column_slice(&d.values);
    let parts = ols::fit(&yv, &x, labels, SeFlavor::Homoskedastic)?;
    let l = instruments.len();
    let b = DVector::from_iterator(l, (1..=l).map(|j| parts.report.coefficients[j].estimate));
    if parts.resid.norm_squared() == 0.0 {
        return Ok(if b.norm() > 0.0 { f64::INFINITY } else { 0.0 });
    }
    let v = DMatrix::from_fn(l, l, |i, j| parts.report.covariance[i + 1][j + 1]);
    let vinv = linalg::invert(&v).ok_or_else(|| EconError::RankDeficient("instrument covariance".into()))?;
    Ok((b.transpose() * vinv * &b)[(0, 0)] / l as f64)
}

/// Anderson–Rubin test of `H0: beta = beta0`: an HC1 Wald test on the
/// excluded instruments in the regression of `y - D beta0` on the
/// instruments and controls. Returns the p-value.
pub fn anderson_rubin_test(
    y: &Column,
    treatments: &[&Column],
    instruments: &[&Column],
    controls: &[&Column],
    beta0: &[f64],
) -> Result<f64, EconError> {
    if beta0.len() != treatments.len() {
        return Err(EconError::InvalidDesign("beta0 length differs from the number of treatments".into()));
    }
    if instruments.is_empty() {
        return Err(EconError::InvalidDesign("no excluded instruments".into()));
    }
    check_lengths(y, treatments)?;
    let mut adjusted = y.values.clone();
    for (d, b) in treatments.iter().zip(beta0) {
        for (a, v) in adjusted.iter_mut().zip(&d.values) {
            *a -= b * v;
        }
    }
    let ytilde = Column::new(y.label.clone(), adjusted);
    let regs: Vec<&Column> = instruments.iter().chain(controls).copied().collect();
    let rf = ols::ols_hc(&ytilde, &regs)?;
    let l = instruments.len();
    if l == 1 {
        return Ok(rf.coefficients[1].p_value);
    }
    let b = DVector::from_iterator(l, (1..=l).map(|j| rf.coefficients[j].estimate));
    let v = DMatrix::from_fn(l, l, |i, j| rf.covariance[i + 1][j + 1]);
    if v.iter().all(|x| *x == 0.0) {
        return Ok(1.0);
    }
    let vinv = linalg::invert(&v).ok_or_else(|| EconError::RankDeficient("reduced-form covariance".into()))?;
    let w = (b.transpose() * vinv * &b)[(0, 0)];
    let chi = ChiSquared::new(l as f64).map_err(|e| EconError::InvalidDesign(e.to_string()))?;
    Ok(chi.sf(w))
}

fn rss(y: &DVector<f64>, x: &DMatrix<f64>, labels: &[String]) -> Result<f64, EconError> {
    let ls = linalg::lstsq(x, y, labels)?;
    Ok((y - x * ls.beta).norm_squared())
}

/// Two-stage least squares with HC1 errors computed from structural residuals.
///
/// Diagnostics carry the first stages; with a single endogenous regressor
/// they also carry the Cragg–Donald F, the first-stage coefficient of the
/// first instrument and the Anderson–Rubin p-value for `beta = 0`.
pub fn tsls(
    y: &Column,
    treatments: &[&Column],
    instruments: &[&Column],
    controls: &[&Column],
) -> Result<EstimateReport, EconError> {
    if treatments.is_empty() {
        return Err(EconError::InvalidDesign("no endogenous regressor".into()));
    }
    if instruments.len() < treatments.len() {
        return Err(EconError::InvalidDesign(format!(
            "{} instruments for {} endogenous regressors",
            instruments.len(),
            treatments.len()
        )));
    }
    let all: Vec<&Column> = treatments.iter().chain(instruments).chain(controls).copied().collect();
    let n = check_lengths(y, &all)?;

    let z_regs: Vec<&Column> = instruments.iter().chain(controls).copied().collect();
    let (zmat, zlabels) = with_intercept(&z_regs, n);
    let (cmat, clabels) = with_intercept(controls, n);

    let mut first_stages = Vec::with_capacity(treatments.len());
    let mut fitted = Vec::with_capacity(treatments.len());
    for d in treatments {
        let dv = DVector::from_column_slice(&d.values);
        let restricted = rss(&dv, &cmat, &clabels)?;
        let parts = ols::fit(&dv, &zmat, zlabels.clone(), SeFlavor::Hc1)?;
        let unrestricted = parts.resid.norm_squared();
        if restricted <= 0.0 || restricted - unrestricted <= WEAK_TOL * restricted {
            return Err(EconError::WeakOrZeroFirstStage(d.label.clone()));
        }
        fitted.push(Column::new(d.label.clone(), (&dv - &parts.resid).iter().copied().collect()));
        first_stages.push(parts.report);
    }

    let xhat_cols: Vec<&Column> = fitted.iter().chain(controls.iter().copied()).collect();
    let (xhat, labels) = with_intercept(&xhat_cols, n);
    let x_cols: Vec<&Column> = treatments.iter().chain(controls).copied().collect();
    let (x, _) = with_intercept(&x_cols, n);
    let yv = DVector::from_column_slice(&y.values);
    let ls = linalg::lstsq(&xhat, &yv, &labels).map_err(|e| match e {
        EconError::RankDeficient(_) => EconError::WeakOrZeroFirstStage(treatments[0].label.clone()),
        other => other,
    })?;
    let resid = &yv - &x * &ls.beta;
    let cov = linalg::hc1(&xhat, &resid, &ls.xtx_inv);
    let mut report = report_from(labels, &ls.beta, &cov, SeFlavor::Hc1, n);

    if treatments.len() == 1 {
        report.diagnostics.cragg_donald_f = Some(cragg_donald_f(treatments[0], instruments, controls)?);
        report.diagnostics.first_stage_coef = Some(first_stages[0].coefficients[1].estimate);
        report.diagnostics.ar_pvalue = Some(anderson_rubin_test(y, treatments, instruments, controls, &[0.0])?);
    }
    report.diagnostics.first_stages = first_stages;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn draw(n: usize, seed: u64) -> (Column, Column, Column, Column) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Vec::new();
        let mut x = Vec::new();
        let mut d = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let zi: f64 = rng.sample(StandardNormal);
            let xi: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            let di = 0.8 * zi + 0.3 * xi + v + 0.5 * u;
            z.push(zi);
            x.push(xi);
            d.push(di);
            y.push(1.0 + 0.5 * di - 0.2 * xi + u);
        }
        (Column::new("y", y), Column::new("d", d), Column::new("z", z), Column::new("x", x))
    }

    #[test]
    fn just_identified_equals_indirect_least_squares() {
        let (y, d, z, x) = draw(500, 3);
        let iv = tsls(&y, &[&d], &[&z], &[&x]).unwrap();
        let rf = ols::ols_hc(&y, &[&z, &x]).unwrap();
        let fs = first_stage(&d, &[&z], &[&x]).unwrap();
        let ils = rf.estimate("z").unwrap() / fs.estimate("z").unwrap();
        assert!((iv.estimate("d").unwrap() - ils).abs() < 1e-10);
    }

    #[test]
    fn ratio_of_covariances() {
        let x = Column::new("x", vec![0.0, 1.0, 2.0, 3.0]);
        let z = Column::new("z", vec![0.0, 1.0, 1.0, 2.0]);
        let y = Column::new("y", vec![1.0, 2.0, 2.0, 4.0]);
        let r = tsls(&y, &[&x], &[&z], &[]).unwrap();
        assert!((r.estimate("x").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn instrument_equal_to_treatment_gives_ols() {
        let (y, d, _, x) = draw(200, 7);
        let iv = tsls(&y, &[&d], &[&d], &[&x]).unwrap();
        let ols = ols::ols_hc(&y, &[&d, &x]).unwrap();
        assert!((iv.estimate("d").unwrap() - ols.estimate("d").unwrap()).abs() < 1e-12);
        assert_eq!(iv.diagnostics.cragg_donald_f, Some(f64::INFINITY));
    }

    #[test]
    fn cd_equals_homoskedastic_t_squared() {
        let (_, d, z, x) = draw(300, 5);
        let f = cragg_donald_f(&d, &[&z], &[&x]).unwrap();
        let t = ols::ols_homoskedastic(&d, &[&z, &x]).unwrap().t_stat("z").unwrap();
        assert!((f - t * t).abs() <= 1e-9 * f.max(1.0));
    }

    #[test]
    fn zero_first_stage_is_rejected() {
        let n = 40;
        let z: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d: Vec<f64> = (0..n).map(|i| if (i / 2) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let y: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let r = tsls(&Column::new("y", y), &[&Column::new("d", d)], &[&Column::new("z", z)], &[]);
        assert!(matches!(r, Err(EconError::WeakOrZeroFirstStage(_))));
    }

    #[test]
    fn ar_on_zero_outcome_is_one() {
        let (_, d, z, x) = draw(100, 9);
        let y = Column::new("y", vec![0.0; 100]);
        let p = anderson_rubin_test(&y, &[&d], &[&z], &[&x], &[0.0]).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn ar_at_truth_on_noiseless_system() {
        let (_, d, z, x) = draw(100, 11);
        let y = Column::new("y", d.values.iter().zip(&x.values).map(|(a, b)| 2.0 + 0.7 * a + b).collect());
        let p = anderson_rubin_test(&y, &[&d], &[&z], &[&x], &[0.7]).unwrap();
        assert!(p > 0.999);
    }

    #[test]
    fn two_endogenous_two_instruments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 2000;
        let (mut y, mut d1, mut d2, mut z1, mut z2) = (vec![], vec![], vec![], vec![], vec![]);
        for _ in 0..n {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let x1 = a + 0.5 * u + e1;
            let x2 = b + 0.5 * u + e2;
            z1.push(a);
            z2.push(b);
            d1.push(x1);
            d2.push(x2);
            y.push(0.4 * x1 - 0.3 * x2 + u);
        }
        let r = tsls(
            &Column::new("y", y),
            &[&Column::new("d1", d1), &Column::new("d2", d2)],
            &[&Column::new("z1", z1), &Column::new("z2", z2)],
            &[],
        )
        .unwrap();
        assert!((r.estimate("d1").unwrap() - 0.4).abs() < 0.1);
        assert!((r.estimate("d2").unwrap() + 0.3).abs() < 0.1);
        assert_eq!(r.diagnostics.first_stages.len(), 2);
        assert!(r.diagnostics.cragg_donald_f.is_none());
    }
}
