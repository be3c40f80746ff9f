use std::collections::BTreeMap;
use std::io::Write;

use super::EconError;

/// One spell: duration in years and whether it is right-censored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapTime {
    pub duration: u32,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPoint {
    pub time: u32,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: f64,
}

/// Product-limit step function; starts at 1 before the first time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub points: Vec<SurvivalPoint>,
}

impl SurvivalCurve {
    /// `S(t)`: survival just after time `t`.
    pub fn at(&self, t: u32) -> f64 {
        self.points.iter().take_while(|p| p.time <= t).last().map_or(1.0, |p| p.survival)
    }
}

/// Kaplan–Meier estimator.
pub fn kaplan_meier(gaps: &[GapTime]) -> Result<SurvivalCurve, EconError> {
    if gaps.is_empty() {
        return Err(EconError::EmptyInput);
    }
    let mut by_time: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for g in gaps {
        if g.duration == 0 {
            return Err(EconError::InvalidDuration(0));
        }
        let e = by_time.entry(g.duration).or_default();
        if g.censored {
            e.1 += 1;
        } else {
            e.0 += 1;
        }
    }
    let n = gaps.len();
    let mut at_risk = n;
    let mut s = 1.0;
    let mut any_censored = false;
    let mut points = Vec::with_capacity(by_time.len());
    for (time, (events, censored)) in by_time {
        if events > 0 {
            // Before any censoring the product telescopes to a plain share.
            s = if any_censored {
                s * (at_risk - events) as f64 / at_risk as f64
            } else {
                (at_risk - events) as f64 / n as f64
            };
        }
        any_censored |= censored > 0;
        points.push(SurvivalPoint { time, at_risk, events, censored, survival: s });
        at_risk -= events + censored;
    }
    Ok(SurvivalCurve { points })
}

/// Spells from per-career filing years: the duration runs from the first to
/// the last filing year inclusive, censored when the last filing falls in or
/// after `censor_from`.
pub fn gap_times_from_careers(careers: &[Vec<i32>], censor_from: i32) -> Vec<GapTime> {
    careers
        .iter()
        .filter_map(|years| {
            let first = *years.iter().min()?;
            let last = *years.iter().max()?;
            Some(GapTime { duration: (last - first + 1) as u32, censored: last >= censor_from })
        })
        .collect()
}

pub fn write_survival<W: Write>(writer: W, curve: &SurvivalCurve) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "at_risk", "events", "censored", "survival"])?;
    for p in &curve.points {
        w.write_record([
            p.time.to_string(),
            p.at_risk.to_string(),
            p.events.to_string(),
            p.censored.to_string(),
            format!("{:.6}", p.survival),
        ])?;
    }
    w.flush()?;
    Ok(())
}
