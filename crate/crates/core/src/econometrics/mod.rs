//! Estimators and diagnostics: OLS and 2SLS with HC1 errors, first-stage
//! strength, Anderson–Rubin tests, probit, two-step selection correction with
//! an endogenous regressor, IV-Poisson GMM and Kaplan–Meier curves.
//!
//! Every estimator prepends an intercept column labelled `Intercept`.

mod design;
mod heckman;
mod iv;
pub(crate) mod linalg;
mod ols;
mod poisson;
mod probit;
mod survival;
pub mod tables;

use thiserror::Error;

pub use design::{Column, DesignBuilder, DesignMatrix};
pub use heckman::{heckman_iv, heckman_point, HeckmanData, HeckmanOptions, ResampleUnit, IMR_LABEL};
pub use iv::{anderson_rubin_test, cragg_donald_f, first_stage, tsls};
pub use ols::{ols, ols_hc, ols_homoskedastic};
pub use poisson::iv_poisson_gmm;
pub use probit::{
    inverse_mills, norm_cdf, norm_pdf, probit_loglik, probit_mle, probit_score, ProbitFit,
};
pub use survival::{gap_times_from_careers, kaplan_meier, write_survival, GapTime, SurvivalCurve, SurvivalPoint};

pub const INTERCEPT: &str = "Intercept";

#[derive(Debug, Error)]
pub enum EconError {
    #[error("design matrix is rank deficient ({0})")]
    RankDeficient(String),
    #[error("first stage for {0} is numerically zero")]
    WeakOrZeroFirstStage(String),
    #[error("perfect separation in the probit: {0}")]
    PerfectSeparation(String),
    #[error("no convergence after {iterations} iterations (criterion {criterion:e})")]
    NoConvergence { iterations: usize, criterion: f64 },
    #[error("too few selected observations: {selected} < {required}")]
    TooFewSelected { selected: usize, required: usize },
    #[error("count outcome has negative values")]
    NegativeCounts,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid duration {0}; durations must be positive")]
    InvalidDuration(u32),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
}

/// How standard errors in a report were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeFlavor {
    Hc1,
    Homoskedastic,
    /// Percentile bootstrap; `std_error` holds the bootstrap standard deviation.
    BootstrapPercentile,
    /// Heteroskedasticity-robust GMM sandwich.
    Sandwich,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
    /// Confidence interval, set for bootstrap reports.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub cragg_donald_f: Option<f64>,
    pub ar_pvalue: Option<f64>,
    pub first_stage_coef: Option<f64>,
    /// First-stage regressions, one per endogenous regressor.
    pub first_stages: Vec<EstimateReport>,
    pub failed_replicates: usize,
    /// Max-norm of the moment vector at the GMM solution.
    pub moment_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub coefficients: Vec<Coefficient>,
    pub se_flavor: SeFlavor,
    pub diagnostics: Diagnostics,
    pub n_used: usize,
    /// Residual degrees of freedom, `n - k`.
    pub dof: usize,
    pub seed: Option<u64>,
    /// Coefficient covariance, row-major, in coefficient order.
    pub covariance: Vec<Vec<f64>>,
}

impl EstimateReport {
    pub fn get(&self, label: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.label == label)
    }

    pub fn estimate(&self, label: &str) -> Option<f64> {
        self.get(label).map(|c| c.estimate)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.coefficients.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn t_stat(&self, label: &str) -> Option<f64> {
        self.get(label).map(|c| c.estimate / c.std_error)
    }
}

/// Two-sided normal p-value of `estimate / std_error`; 1 when the variance
/// is zero.
pub fn two_sided_p(estimate: f64, std_error: f64) -> f64 {
    if std_error.is_nan() || std_error <= 0.0 || !std_error.is_finite() {
        return 1.0;
    }
    let z = (estimate / std_error).abs();
    libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
