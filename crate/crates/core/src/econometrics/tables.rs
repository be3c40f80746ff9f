//! CSV and aligned-markdown rendering of regression tables: one coefficient
//! row per variable, followed by a p-value row in parentheses or a bracketed
//! confidence interval, then N, diagnostics and instrument labels.

use super::EstimateReport;

#[derive(Debug, Clone)]
pub struct TableColumn {
    pub header: String,
    pub report: EstimateReport,
    pub instruments: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondRow {
    PValue,
    Interval,
}

#[derive(Debug, Clone)]
pub struct RegressionTable {
    pub title: String,
    /// Coefficient labels in display order; labels absent from a column print blank.
    pub rows: Vec<String>,
    pub columns: Vec<TableColumn>,
    pub second_row: SecondRow,
}

/// Fixed-precision number formatting that keeps small coefficients visible.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return if x > 0.0 { "inf".into() } else if x < 0.0 { "-inf".into() } else { "NA".into() };
    }
    let a = x.abs();
    if a == 0.0 || a >= 0.01 {
        format!("{x:.3}")
    } else if a >= 1e-5 {
        format!("{x:.5}")
    } else {
        format!("{x:.2e}")
    }
}

pub fn fmt_p(p: f64) -> String {
    format!("({p:.3})")
}

fn fmt_f(f: f64) -> String {
    if f.is_infinite() {
        "inf".into()
    } else if f >= 1e4 {
        format!("{f:.2e}")
    } else {
        format!("{f:.1}")
    }
}

impl RegressionTable {
    /// Cell grid including the header row.
    pub fn grid(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        let mut header = vec![String::new()];
        header.extend(self.columns.iter().map(|c| c.header.clone()));
        out.push(header);
        for label in &self.rows {
            let mut first = vec![label.clone()];
            let mut second = vec![String::new()];
            for col in &self.columns {
                match col.report.get(label) {
                    Some(c) => {
                        first.push(fmt_num(c.estimate));
                        second.push(match (self.second_row, c.ci) {
                            (SecondRow::Interval, Some((lo, hi))) => format!("[{}; {}]", fmt_num(lo), fmt_num(hi)),
                            _ => fmt_p(c.p_value),
                        });
                    }
                    None => {
                        first.push(String::new());
                        second.push(String::new());
                    }
                }
            }
            out.push(first);
            out.push(second);
        }
        let mut n = vec!["N".to_string()];
        n.extend(self.columns.iter().map(|c| c.report.n_used.to_string()));
        out.push(n);
        if self.columns.iter().any(|c| c.report.diagnostics.ar_pvalue.is_some()) {
            let mut ar = vec!["AR (p-val.)".to_string()];
            ar.extend(self.columns.iter().map(|c| c.report.diagnostics.ar_pvalue.map(fmt_p).unwrap_or_default()));
            out.push(ar);
        }
        if self.columns.iter().any(|c| c.report.diagnostics.cragg_donald_f.is_some()) {
            let mut cd = vec!["Cragg-Donald F".to_string()];
            cd.extend(self.columns.iter().map(|c| c.report.diagnostics.cragg_donald_f.map(fmt_f).unwrap_or_default()));
            out.push(cd);
        }
        let mut inst = vec!["Instrument(s)".to_string()];
        inst.extend(self.columns.iter().map(|c| c.instruments.clone()));
        out.push(inst);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut grid = self.grid();
        grid[0][0] = "variable".into();
        for row in grid {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn to_markdown(&self) -> String {
        let grid = self.grid();
        let ncol = grid[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0).max(3))
            .collect();
        let line = |row: &[String]| -> String {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            format!("| {} |", cells.join(" | "))
        };
        let mut out = format!("### {}\n\n", self.title);
        out.push_str(&line(&grid[0]));
        out.push('\n');
        let rule: Vec<String> = widths
            .iter()
            .enumerate()
            .map(|(j, w)| if j == 0 { format!(":{}", "-".repeat(w - 1)) } else { format!("{}:", "-".repeat(w - 1)) })
            .collect();
        out.push_str(&format!("| {} |\n", rule.join(" | ")));
        for row in &grid[1..] {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}
