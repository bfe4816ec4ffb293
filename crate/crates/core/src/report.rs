//! Report serialization.
//!
//! Analytic reports go to JSON as `{bound, hops: [{h, cumulative}], mean,
//! residual, spec_fingerprint}` and to CSV with one column per bound.
//! Simulation results use the same layout with `ci_low`/`ci_high` added.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::markov::{Bound, HopCountReport};
use crate::sim::SimStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopPoint {
    pub h: usize,
    pub cumulative: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_high: Option<f64>,
}

/// Serialized form of one hop-count curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub bound: String,
    pub hops: Vec<HopPoint>,
    pub mean: f64,
    pub residual: f64,
    pub spec_fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_ci: Option<(f64, f64)>,
}

impl From<&HopCountReport> for ReportDoc {
    fn from(r: &HopCountReport) -> Self {
        ReportDoc {
            bound: r.bound.name().to_string(),
            hops: r
                .cumulative
                .iter()
                .enumerate()
                .map(|(i, &c)| HopPoint {
                    h: i + 1,
                    cumulative: c,
                    ci_low: None,
                    ci_high: None,
                })
                .collect(),
            mean: r.mean,
            residual: r.residual,
            spec_fingerprint: r.spec_fingerprint.clone(),
            mean_ci: None,
        }
    }
}

impl ReportDoc {
    pub fn from_sim(stats: &SimStats, spec_fingerprint: &str) -> Self {
        ReportDoc {
            bound: "simulated".to_string(),
            hops: stats
                .cumulative
                .iter()
                .enumerate()
                .map(|(i, e)| HopPoint {
                    h: i + 1,
                    cumulative: e.mean,
                    ci_low: Some(e.ci_low),
                    ci_high: Some(e.ci_high),
                })
                .collect(),
            mean: stats.mean.mean,
            residual: stats.failed,
            spec_fingerprint: spec_fingerprint.to_string(),
            mean_ci: Some((stats.mean.ci_low, stats.mean.ci_high)),
        }
    }
}

pub fn report_json(report: &HopCountReport) -> String {
    serde_json::to_string_pretty(&ReportDoc::from(report)).expect("report serializes")
}

pub fn sim_json(stats: &SimStats, spec_fingerprint: &str) -> String {
    serde_json::to_string_pretty(&ReportDoc::from_sim(stats, spec_fingerprint))
        .expect("report serializes")
}

/// `h,cumulative_low,cumulative_up`, one row per hop. Missing bounds leave
/// their column empty; the shorter curve is extended by its last value.
pub fn bounds_csv(reports: &[HopCountReport]) -> String {
    let pick = |b: Bound| reports.iter().find(|r| r.bound == b);
    let low = pick(Bound::Lower);
    let up = pick(Bound::Upper);
    let rows = reports.iter().map(|r| r.cumulative.len()).max().unwrap_or(0);
    let mut out = String::from("h,cumulative_low,cumulative_up\n");
    let cell = |r: Option<&HopCountReport>, h: usize| r.map(|r| r.at(h).to_string()).unwrap_or_default();
    for h in 1..=rows {
        let _ = writeln!(out, "{h},{},{}", cell(low, h), cell(up, h));
    }
    out
}

/// `h,cumulative,ci_low,ci_high`.
pub fn sim_csv(stats: &SimStats) -> String {
    let mut out = String::from("h,cumulative,ci_low,ci_high\n");
    for (i, e) in stats.cumulative.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, e.mean, e.ci_low, e.ci_high);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Estimate;

    fn report(bound: Bound, cumulative: Vec<f64>) -> HopCountReport {
        HopCountReport {
            bound,
            mean: crate::markov::mean_hop_count(&cumulative),
            residual: 1.0 - cumulative.last().unwrap(),
            cumulative,
            spec_fingerprint: "abc".into(),
            churn: None,
        }
    }

    #[test]
    fn json_shape() {
        let r = report(Bound::Upper, vec![0.25, 1.0]);
        let v: serde_json::Value = serde_json::from_str(&report_json(&r)).unwrap();
        assert_eq!(v["bound"], "upper");
        assert_eq!(v["hops"][1]["h"], 2);
        assert_eq!(v["hops"][0]["cumulative"], 0.25);
        assert_eq!(v["mean"], 1.75);
        assert_eq!(v["spec_fingerprint"], "abc");
        assert!(v["hops"][0].get("ci_low").is_none());
    }

    #[test]
    fn csv_pads_shorter_curve() {
        let csv = bounds_csv(&[
            report(Bound::Lower, vec![0.1, 0.9, 1.0]),
            report(Bound::Upper, vec![0.2, 1.0]),
        ]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "h,cumulative_low,cumulative_up");
        assert_eq!(lines[3], "3,1,1");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn sim_rows_carry_intervals() {
        let e = Estimate {
            mean: 0.5,
            ci_low: 0.4,
            ci_high: 0.6,
        };
        let stats = SimStats {
            alpha: 3,
            beta: 2,
            topologies: 2,
            lookups: 10,
            cumulative: vec![e],
            mean: e,
            failed: 0.0,
        };
        assert_eq!(sim_csv(&stats), "h,cumulative,ci_low,ci_high\n1,0.5,0.4,0.6\n");
        let doc: ReportDoc = serde_json::from_str(&sim_json(&stats, "f")).unwrap();
        assert_eq!(doc.hops[0].ci_high, Some(0.6));
    }
}
