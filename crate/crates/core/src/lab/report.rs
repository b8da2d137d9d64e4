//! Experiment reports and their CSV / JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::lab::convergence::{ConvergenceProfile, ErrorPoint};
use crate::lab::estimate::ConstantEstimate;
use crate::lab::families::CertificateSummary;
use crate::lab::jumps::JumpProfile;
use crate::lab::probes::{Ell1Probe, WeightedProbe};

/// CSV header; every row of every report has these six columns.
pub const CSV_COLUMNS: &str = "section,series,member,x1,x2,value";

/// One line of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub section: String,
    pub series: String,
    pub member: Option<usize>,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    pub value: f64,
}

impl ReportRow {
    pub fn new(section: &str, series: &str, value: f64) -> Self {
        ReportRow {
            section: section.into(),
            series: series.into(),
            member: None,
            x1: None,
            x2: None,
            value,
        }
    }

    pub fn member(mut self, m: usize) -> Self {
        self.member = Some(m);
        self
    }

    pub fn x1(mut self, x: f64) -> Self {
        self.x1 = Some(x);
        self
    }

    pub fn x2(mut self, x: f64) -> Self {
        self.x2 = Some(x);
        self
    }
}

/// Typed payload of a report, one variant per experiment family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Details {
    Estimate(ConstantEstimate),
    Jump { estimate: ConstantEstimate, profile: JumpProfile },
    Convergence(ConvergenceProfile),
    Ell1Probe(Ell1Probe),
    Weighted(WeightedProbe),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub operator: String,
    pub family: Option<String>,
    /// `"UMD regime"` for `1 < r < ∞`, `"non-UMD probe"` for `r = 1`.
    pub regime: String,
    pub seed: u64,
    /// Canonical TOML of the configuration that produced the report.
    pub config: String,
    /// Warnings such as `UNSATURATED`; empty when nothing needs attention.
    pub flags: Vec<String>,
    pub certificates: Option<CertificateSummary>,
    /// Headline numbers.
    pub summary: BTreeMap<String, f64>,
    pub details: Details,
    pub rows: Vec<ReportRow>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Report {
    /// `report.csv`: the header and one line per row, numbers with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_COLUMNS);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.section,
                row.series,
                row.member.map(|m| m.to_string()).unwrap_or_default(),
                row.x1.map(num).unwrap_or_default(),
                row.x2.map(num).unwrap_or_default(),
                num(row.value)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn estimate_rows(section: &str, e: &ConstantEstimate, rows: &mut Vec<ReportRow>) {
    rows.push(ReportRow::new(section, "sup_ratio", e.sup_ratio));
    for (i, r) in e.ratios.iter().enumerate() {
        rows.push(ReportRow::new(section, "ratio", *r).member(i));
    }
    for (i, r) in e.maximal_ratios.iter().enumerate() {
        rows.push(ReportRow::new(section, "maximal_ratio", *r).member(i));
    }
    for (k, v) in e.stability_trace.iter().enumerate() {
        rows.push(ReportRow::new(section, "stability", *v).x1((k + 1) as f64));
    }
    for q in &e.quantiles {
        rows.push(ReportRow::new(section, "quantile", q.value).x1(q.level));
    }
    for s in &e.q_sweep {
        rows.push(ReportRow::new(section, "q_sweep", s.sup_ratio).x1(s.q));
    }
    if let Some(r) = &e.refinement {
        rows.push(ReportRow::new(section, "refinement", r.coarse_sup).x1(r.coarse_points as f64));
        rows.push(ReportRow::new(section, "refinement", r.refined_sup).x1(r.refined_points as f64));
    }
}

pub(crate) fn error_rows(series: &str, points: &[ErrorPoint], rows: &mut Vec<ReportRow>) {
    for p in points {
        rows.push(ReportRow::new("convergence", series, p.error).x1(p.x));
    }
}

pub(crate) fn certificate_rows(c: &Option<CertificateSummary>, rows: &mut Vec<ReportRow>) {
    if let Some(a) = c.as_ref().and_then(|c| c.analyticity.as_ref()) {
        for (n, v) in a.trace.iter().enumerate() {
            rows.push(ReportRow::new("analyticity", "trace", *v).x1((n + 1) as f64));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting() {
        let report = Report {
            kind: "k".into(),
            operator: "o".into(),
            family: None,
            regime: "UMD regime".into(),
            seed: 1,
            config: String::new(),
            flags: Vec::new(),
            certificates: None,
            summary: BTreeMap::new(),
            details: Details::Ell1Probe(Ell1Probe {
                p: 2.0,
                points: Vec::new(),
                r1_nondecreasing: true,
                r2_spread: 0.0,
                r2_flat: true,
            }),
            rows: vec![
                ReportRow::new("estimate", "ratio", 1.0 / 3.0).member(4),
                ReportRow::new("jump", "tail_mass", 0.0).x1(0.5).x2(2.0),
            ],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_COLUMNS);
        assert_eq!(lines[1], "estimate,ratio,4,,,3.3333333333333331e-1");
        assert_eq!(lines[2], "jump,tail_mass,,5.0000000000000000e-1,2.0000000000000000e0,0.0000000000000000e0");
        let back: Report = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
