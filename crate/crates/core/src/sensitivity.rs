//! Omitted-variable sensitivity of a reduced-form OLS coefficient: partial
//! R², robustness values, bias bounds and benchmark covariates.
//!
//! All t-statistics here use classical standard errors with `dof = n - k`,
//! which makes the partial-R² bias formula exact.

use std::io::Write;

use nalgebra::DVector;

use crate::econometrics::linalg::{lstsq, with_intercept};
use crate::econometrics::{ols_homoskedastic, Column, EconError};

/// `t² / (t² + dof)`.
pub fn partial_r2(t_stat: f64, dof: f64) -> f64 {
    let t2 = t_stat * t_stat;
    if t2 == 0.0 {
        return 0.0;
    }
    if t2.is_infinite() {
        return 1.0;
    }
    t2 / (t2 + dof)
}

/// Robustness value for explaining away the whole estimate:
/// `½(√(f⁴ + 4f²) − f²)` with `f² = t²/dof`.
pub fn robustness_value(t_stat: f64, dof: f64) -> f64 {
    let f2 = t_stat * t_stat / dof;
    if f2 == 0.0 {
        return 0.0;
    }
    if f2.is_infinite() {
        return 1.0;
    }
    0.5 * ((f2 * f2 + 4.0 * f2).sqrt() - f2)
}

/// Largest absolute bias from a confounder with partial R² `r2_zu` with the
/// regressor and `r2_yu` with the outcome.
pub fn bias_bound(std_error: f64, dof: f64, r2_zu: f64, r2_yu: f64) -> f64 {
    if r2_zu >= 1.0 {
        return f64::INFINITY;
    }
    std_error * (r2_yu * r2_zu / (1.0 - r2_zu)).sqrt() * dof.sqrt()
}

/// Estimate moved toward zero by the bias bound.
pub fn adjusted_estimate(estimate: f64, std_error: f64, dof: f64, r2_zu: f64, r2_yu: f64) -> f64 {
    let b = bias_bound(std_error, dof, r2_zu, r2_yu);
    estimate.signum() * (estimate.abs() - b)
}

/// Partial R² of `covariate` in the regression of `target` on
/// `covariate` and `others` (plus intercept), from residual sums of squares.
pub fn partial_r2_of(target: &Column, covariate: &Column, others: &[&Column]) -> Result<f64, EconError> {
    let n = target.len();
    let y = DVector::from_column_slice(&target.values);
    let (xr, lr) = with_intercept(others, n);
    let mut full: Vec<&Column> = vec![covariate];
    full.extend(others.iter().copied());
    let (xf, lf) = with_intercept(&full, n);
    let rss_r = (&y - &xr * lstsq(&xr, &y, &lr)?.beta).norm_squared();
    let rss_f = (&y - &xf * lstsq(&xf, &y, &lf)?.beta).norm_squared();
    if rss_r == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - rss_f / rss_r).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub covariate: String,
    /// Partial R² of the covariate with the instrument given the other controls.
    pub r2_with_instrument: f64,
    /// Partial R² of the covariate with the outcome given the instrument and other controls.
    pub r2_with_outcome: f64,
}

/// Benchmark an observed control against the robustness value.
pub fn benchmark_covariate(
    covariate: &Column,
    instrument: &Column,
    outcome: &Column,
    others: &[&Column],
) -> Result<Benchmark, EconError> {
    let r2_zw = partial_r2_of(instrument, covariate, others)?;
    let mut with_z: Vec<&Column> = vec![instrument];
    with_z.extend(others.iter().copied());
    let r2_yw = partial_r2_of(outcome, covariate, &with_z)?;
    Ok(Benchmark { covariate: covariate.label.clone(), r2_with_instrument: r2_zw, r2_with_outcome: r2_yw })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub instrument: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub dof: usize,
    pub partial_r2_treatment: f64,
    pub robustness_value: f64,
    pub benchmarks: Vec<Benchmark>,
}

/// Sensitivity of the reduced-form coefficient of `instrument` in
/// `outcome ~ instrument + controls`, benchmarked against the named controls.
pub fn sensitivity_report(
    outcome: &Column,
    instrument: &Column,
    controls: &[&Column],
    benchmarks: &[&str],
) -> Result<SensitivityReport, EconError> {
    let mut regs: Vec<&Column> = vec![instrument];
    regs.extend(controls.iter().copied());
    let rf = ols_homoskedastic(outcome, &regs)?;
    let c = &rf.coefficients[1];
    let t = if c.std_error > 0.0 { c.estimate / c.std_error } else { 0.0 };
    let dof = rf.dof as f64;
    let mut out = Vec::with_capacity(benchmarks.len());
    for name in benchmarks {
        let (w, others): (Vec<&Column>, Vec<&Column>) = controls.iter().partition(|c| c.label == *name);
        let w = w
            .first()
            .ok_or_else(|| EconError::InvalidDesign(format!("benchmark {name} is not a control")))?;
        out.push(benchmark_covariate(w, instrument, outcome, &others)?);
    }
    Ok(SensitivityReport {
        instrument: instrument.label.clone(),
        estimate: c.estimate,
        std_error: c.std_error,
        t_stat: t,
        dof: rf.dof,
        partial_r2_treatment: partial_r2(t, dof),
        robustness_value: robustness_value(t, dof),
        benchmarks: out,
    })
}

/// A confounder with partial R² equal to the robustness value with both the
/// instrument and the outcome, signed so that adding it to the reduced form
/// drives the instrument's coefficient to zero.
pub fn extreme_confounder(outcome: &Column, instrument: &Column, controls: &[&Column]) -> Result<Column, EconError> {
    let n = outcome.len();
    let y = DVector::from_column_slice(&outcome.values);
    let z = DVector::from_column_slice(&instrument.values);
    let (xc, lc) = with_intercept(controls, n);
    let mut zx: Vec<&Column> = vec![instrument];
    zx.extend(controls.iter().copied());
    let (xz, lz) = with_intercept(&zx, n);

    let zr = &z - &xc * lstsq(&xc, &z, &lc)?.beta;
    let fit = lstsq(&xz, &y, &lz)?;
    let er = &y - &xz * &fit.beta;
    let beta = fit.beta[1];
    let dof = (n - xz.ncols()) as f64;
    let se = (er.norm_squared() / dof).sqrt() / zr.norm();
    let r = robustness_value(beta / se, dof);

    // Third direction orthogonal to the intercept, controls, instrument and residual.
    let probe = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.73).sin());
    let mut w = &probe - &xz * lstsq(&xz, &probe, &lz)?.beta;
    let en = er.normalize();
    w -= &en * en.dot(&w);

    let alpha = r.sqrt();
    let gamma = beta.signum() * (r * (1.0 - r)).sqrt();
    let delta = 1.0 - r;
    let u = zr.normalize() * alpha + en * gamma + w.normalize() * delta;
    Ok(Column::new("U", u.iter().copied().collect()))
}

/// One row per instrument and benchmark, in percent with two decimals.
pub fn write_sensitivity<W: Write>(writer: W, reports: &[SensitivityReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["instrument", "robustness_value", "benchmark", "R2_zw", "R2_yw"])?;
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    for r in reports {
        let rv = pct(r.robustness_value);
        if r.benchmarks.is_empty() {
            w.write_record([r.instrument.as_str(), &rv, "", "", ""])?;
        }
        for b in &r.benchmarks {
            w.write_record([
                r.instrument.as_str(),
                &rv,
                &b.covariate,
                &pct(b.r2_with_instrument),
                &pct(b.r2_with_outcome),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
