use super::EconError;

/// A labelled numeric column.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub label: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Column { label: label.into(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Column {
        Column::new(self.label.clone(), self.values.iter().map(|v| v * c).collect())
    }

    pub(crate) fn subset(&self, rows: &[usize]) -> Column {
        Column::new(self.label.clone(), rows.iter().map(|&i| self.values[i]).collect())
    }
}

/// Outcome, endogenous treatments, excluded instruments and controls for one
/// estimation sample. The intercept is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub outcome: Column,
    pub treatments: Vec<Column>,
    pub instruments: Vec<Column>,
    pub controls: Vec<Column>,
    /// Selection indicator; the outcome is only meaningful where it is true.
    pub selection: Option<Vec<bool>>,
    /// Rows dropped during assembly because of missing cells.
    pub dropped: usize,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn validate(&self) -> Result<(), EconError> {
        let n = self.n();
        if n == 0 {
            return Err(EconError::EmptyInput);
        }
        let all = self.treatments.iter().chain(&self.instruments).chain(&self.controls);
        for c in all.chain(std::iter::once(&self.outcome)) {
            if c.len() != n {
                return Err(EconError::InvalidDesign(format!(
                    "column {} has {} rows, expected {n}",
                    c.label,
                    c.len()
                )));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(EconError::InvalidDesign(format!("column {} has non-finite cells", c.label)));
            }
        }
        if let Some(s) = &self.selection {
            if s.len() != n {
                return Err(EconError::InvalidDesign("selection length mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Builds a [`DesignMatrix`] from optional cells, dropping incomplete rows.
///
/// With a selection indicator, missing outcomes on unselected rows are
/// allowed and stored as zero.
#[derive(Debug, Default)]
pub struct DesignBuilder {
    outcome: Option<(String, Vec<Option<f64>>)>,
    treatments: Vec<(String, Vec<Option<f64>>)>,
    instruments: Vec<(String, Vec<Option<f64>>)>,
    controls: Vec<(String, Vec<Option<f64>>)>,
    selection: Option<Vec<bool>>,
}

impl DesignBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn outcome(mut self, label: &str, values: Vec<Option<f64>>) -> Self {
        self.outcome = Some((label.to_string(), values));
        self
    }

    pub fn treatment(mut self, label: &str, values: Vec<Option<f64>>) -> Self {
        self.treatments.push((label.to_string(), values));
        self
    }

    pub fn instrument(mut self, label: &str, values: Vec<Option<f64>>) -> Self {
        self.instruments.push((label.to_string(), values));
        self
    }

    pub fn control(mut self, label: &str, values: Vec<Option<f64>>) -> Self {
        self.controls.push((label.to_string(), values));
        self
    }

    pub fn selection(mut self, selected: Vec<bool>) -> Self {
        self.selection = Some(selected);
        self
    }

    pub fn build(self) -> Result<DesignMatrix, EconError> {
        let (olabel, ovalues) = self
            .outcome
            .ok_or_else(|| EconError::InvalidDesign("no outcome column".into()))?;
        let n = ovalues.len();
        let groups = [&self.treatments, &self.instruments, &self.controls];
        for (label, v) in groups.iter().flat_map(|g| g.iter()) {
            if v.len() != n {
                return Err(EconError::InvalidDesign(format!("column {label} has {} rows, expected {n}", v.len())));
            }
        }
        if let Some(s) = &self.selection {
            if s.len() != n {
                return Err(EconError::InvalidDesign("selection length mismatch".into()));
            }
        }
        let keep: Vec<usize> = (0..n)
            .filter(|&i| {
                let selected = self.selection.as_ref().is_none_or(|s| s[i]);
                let outcome_ok = !selected || ovalues[i].is_some_and(f64::is_finite);
                outcome_ok
                    && groups
                        .iter()
                        .flat_map(|g| g.iter())
                        .all(|(_, v)| v[i].is_some_and(f64::is_finite))
            })
            .collect();
        let take = |v: &[Option<f64>]| -> Vec<f64> { keep.iter().map(|&i| v[i].unwrap_or(0.0)).collect() };
        let cols = |g: &[(String, Vec<Option<f64>>)]| -> Vec<Column> {
            g.iter().map(|(l, v)| Column::new(l.clone(), take(v))).collect()
        };
        let dm = DesignMatrix {
            outcome: Column::new(olabel, take(&ovalues)),
            treatments: cols(&self.treatments),
            instruments: cols(&self.instruments),
            controls: cols(&self.controls),
            selection: self.selection.as_ref().map(|s| keep.iter().map(|&i| s[i]).collect()),
            dropped: n - keep.len(),
        };
        if dm.n() == 0 {
            return Err(EconError::EmptyInput);
        }
        Ok(dm)
    }
}
