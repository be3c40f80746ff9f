use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::iv::tsls;
use super::probit::{inverse_mills, probit_mle};
use super::{quantile, two_sided_p, Column, EconError, EstimateReport, SeFlavor};

pub const IMR_LABEL: &str = "Inverse Mills Ratio";

/// Inputs for the two-step selection model with an endogenous regressor.
#[derive(Debug, Clone)]
pub struct HeckmanData {
    pub selected: Vec<bool>,
    /// Outcome; values on unselected rows are ignored.
    pub outcome: Column,
    pub treatment: Column,
    pub instrument: Column,
    /// Enters the selection equation only.
    pub exclusion: Column,
    pub controls: Vec<Column>,
    /// Cluster labels for the cluster bootstrap.
    pub clusters: Option<Vec<String>>,
}

impl HeckmanData {
    pub fn n(&self) -> usize {
        self.selected.len()
    }

    fn validate(&self) -> Result<(), EconError> {
        let n = self.n();
        if n == 0 {
            return Err(EconError::EmptyInput);
        }
        let cols = [&self.outcome, &self.treatment, &self.instrument, &self.exclusion];
        for c in cols.into_iter().chain(&self.controls) {
            if c.len() != n {
                return Err(EconError::InvalidDesign(format!("column {} has {} rows, expected {n}", c.label, c.len())));
            }
        }
        if self.clusters.as_ref().is_some_and(|c| c.len() != n) {
            return Err(EconError::InvalidDesign("cluster labels length mismatch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleUnit {
    #[default]
    Rows,
    Clusters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeckmanOptions {
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub resample: ResampleUnit,
    pub level: f64,
}

impl Default for HeckmanOptions {
    fn default() -> Self {
        HeckmanOptions { bootstrap_reps: 300, seed: 0, resample: ResampleUnit::Rows, level: 0.95 }
    }
}

/// Point estimate on the given rows: probit selection on the exclusion,
/// instrument and controls, then 2SLS on the selected rows with the inverse
/// Mills ratio as an extra control. Standard errors are naive HC1.
pub fn heckman_point(data: &HeckmanData, rows: &[usize]) -> Result<EstimateReport, EconError> {
    let sel: Vec<bool> = rows.iter().map(|&i| data.selected[i]).collect();
    let exclusion = data.exclusion.subset(rows);
    let instrument = data.instrument.subset(rows);
    let controls: Vec<Column> = data.controls.iter().map(|c| c.subset(rows)).collect();

    let k2 = 3 + controls.len();
    let n_sel = sel.iter().filter(|s| **s).count();
    if n_sel < 2 * k2 {
        return Err(EconError::TooFewSelected { selected: n_sel, required: 2 * k2 });
    }

    let mut w: Vec<&Column> = vec![&exclusion, &instrument];
    w.extend(controls.iter());
    let probit = probit_mle(&sel, &w)?;
    let index = probit.index(&w);

    let kept: Vec<usize> = rows.iter().zip(&sel).filter(|(_, s)| **s).map(|(&i, _)| i).collect();
    let pick = |v: &[f64]| -> Vec<f64> { sel.iter().zip(v).filter(|(s, _)| **s).map(|(_, x)| *x).collect() };
    let imr = Column::new(IMR_LABEL, pick(&index).into_iter().map(inverse_mills).collect());
    let y = data.outcome.subset(&kept);
    let d = data.treatment.subset(&kept);
    let z = data.instrument.subset(&kept);
    let xs: Vec<Column> = data.controls.iter().map(|c| c.subset(&kept)).collect();
    let mut ctl: Vec<&Column> = xs.iter().collect();
    ctl.push(&imr);
    let mut report = tsls(&y, &[&d], &[&z], &ctl)?;
    report.diagnostics.first_stages.clear();
    Ok(report)
}

fn draw_rows(data: &HeckmanData, unit: ResampleUnit, groups: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.n();
    match unit {
        ResampleUnit::Rows => (0..n).map(|_| rng.random_range(0..n)).collect(),
        ResampleUnit::Clusters => {
            let g = groups.len();
            (0..g).flat_map(|_| groups[rng.random_range(0..g)].iter().copied()).collect()
        }
    }
}

/// Selection-corrected IV estimate with percentile bootstrap intervals.
///
/// Replicates run in parallel; replicate `r` draws from a ChaCha stream
/// keyed by `(seed, r)`, so results do not depend on the worker count.
/// Replicates that fail to estimate are skipped and counted.
pub fn heckman_iv(data: &HeckmanData, options: &HeckmanOptions) -> Result<EstimateReport, EconError> {
    data.validate()?;
    let all: Vec<usize> = (0..data.n()).collect();
    let mut report = heckman_point(data, &all)?;

    let groups: Vec<Vec<usize>> = match (&data.clusters, options.resample) {
        (Some(labels), ResampleUnit::Clusters) => {
            let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                map.entry(l.as_str()).or_default().push(i);
            }
            map.into_values().collect()
        }
        (None, ResampleUnit::Clusters) => {
            return Err(EconError::InvalidDesign("cluster bootstrap without cluster labels".into()))
        }
        _ => Vec::new(),
    };

    let draws: Vec<Option<Vec<f64>>> = (0..options.bootstrap_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64);
            let rows = draw_rows(data, options.resample, &groups, &mut rng);
            heckman_point(data, &rows)
                .ok()
                .map(|rep| rep.coefficients.iter().map(|c| c.estimate).collect())
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let failed = options.bootstrap_reps - ok.len();
    if ok.len() < 2 || ok.len() * 2 < options.bootstrap_reps {
        return Err(EconError::Bootstrap(format!("{failed} of {} replicates failed", options.bootstrap_reps)));
    }

    let alpha = 1.0 - options.level;
    let k = report.coefficients.len();
    let mut cov = vec![vec![0.0; k]; k];
    let means: Vec<f64> = (0..k).map(|j| ok.iter().map(|b| b[j]).sum::<f64>() / ok.len() as f64).collect();
    for a in 0..k {
        for b in 0..k {
            cov[a][b] = ok.iter().map(|d| (d[a] - means[a]) * (d[b] - means[b])).sum::<f64>() / (ok.len() - 1) as f64;
        }
    }
    for (j, c) in report.coefficients.iter_mut().enumerate() {
        let mut v: Vec<f64> = ok.iter().map(|b| b[j]).collect();
        v.sort_by(f64::total_cmp);
        c.ci = Some((quantile(&v, alpha / 2.0), quantile(&v, 1.0 - alpha / 2.0)));
        c.std_error = cov[j][j].sqrt();
        c.p_value = two_sided_p(c.estimate, c.std_error);
    }
    report.covariance = cov;
    report.se_flavor = SeFlavor::BootstrapPercentile;
    report.seed = Some(options.seed);
    report.diagnostics.failed_replicates = failed;
    Ok(report)
}
