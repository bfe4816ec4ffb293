//! Output rows: `system,n,alpha,beta,stale,bound,hop,cumulative,mean`.

use std::io::Write;

use kadhop::sim::SimStats;
use kadhop::HopCountReport;
use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::error::CliError;

pub const HEADER: [&str; 9] = ["system", "n", "alpha", "beta", "stale", "bound", "hop", "cumulative", "mean"];

/// Identifies the system a group of rows belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub system: String,
    pub n: u64,
    pub alpha: u32,
    pub beta: u32,
    pub stale: f64,
}

/// One output row. Error rows carry no hop data and mark the `hop` column
/// with `error` in CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub system: String,
    pub n: u64,
    pub alpha: u32,
    pub beta: u32,
    pub stale: f64,
    pub bound: String,
    pub hop: Option<usize>,
    pub cumulative: Option<f64>,
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellKey {
    fn row(&self, bound: &str) -> Row {
        Row {
            system: self.system.clone(),
            n: self.n,
            alpha: self.alpha,
            beta: self.beta,
            stale: self.stale,
            bound: bound.to_string(),
            hop: None,
            cumulative: None,
            mean: None,
            ci_low: None,
            ci_high: None,
            error: None,
        }
    }

    pub fn analytic_rows(&self, report: &HopCountReport) -> Vec<Row> {
        report
            .cumulative
            .iter()
            .enumerate()
            .map(|(i, &c)| Row {
                hop: Some(i + 1),
                cumulative: Some(c),
                mean: Some(report.mean),
                ..self.row(report.bound.name())
            })
            .collect()
    }

    pub fn sim_rows(&self, stats: &SimStats) -> Vec<Row> {
        stats
            .cumulative
            .iter()
            .enumerate()
            .map(|(i, e)| Row {
                hop: Some(i + 1),
                cumulative: Some(e.mean),
                mean: Some(stats.mean.mean),
                ci_low: Some(e.ci_low),
                ci_high: Some(e.ci_high),
                ..self.row("simulated")
            })
            .collect()
    }

    pub fn error_row(&self, bound: &str, message: &str) -> Row {
        Row {
            error: Some(message.to_string()),
            ..self.row(bound)
        }
    }
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_rows(out: &mut dyn Write, format: Format, rows: &[Row]) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(HEADER)?;
            for r in rows {
                let hop = if r.error.is_some() { "error".to_string() } else { cell(r.hop) };
                w.write_record([
                    r.system.clone(),
                    r.n.to_string(),
                    r.alpha.to_string(),
                    r.beta.to_string(),
                    r.stale.to_string(),
                    r.bound.clone(),
                    hop,
                    cell(r.cumulative),
                    cell(r.mean),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, rows).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use kadhop::Bound;

    fn key() -> CellKey {
        CellKey {
            system: "kad".into(),
            n: 1000,
            alpha: 3,
            beta: 2,
            stale: 0.1,
        }
    }

    fn report() -> HopCountReport {
        HopCountReport {
            bound: Bound::Lower,
            cumulative: vec![0.5, 1.0],
            mean: 1.5,
            residual: 0.0,
            spec_fingerprint: "f".into(),
            churn: None,
        }
    }

    #[test]
    fn csv_layout() {
        let mut rows = key().analytic_rows(&report());
        rows.push(key().error_row("upper", "too big, really"));
        let mut buf = Vec::new();
        write_rows(&mut buf, Format::Csv, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "system,n,alpha,beta,stale,bound,hop,cumulative,mean");
        assert_eq!(lines[1], "kad,1000,3,2,0.1,lower,1,0.5,1.5");
        assert_eq!(lines[3], "kad,1000,3,2,0.1,upper,error,,");
    }

    #[test]
    fn json_round_trips() {
        let rows = key().analytic_rows(&report());
        let mut buf = Vec::new();
        write_rows(&mut buf, Format::Json, &rows).unwrap();
        let back: Vec<Row> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, rows);
    }
}
