//! Report files: the JSON report and the per-cell CSV table.
//!
//! CSV columns:
//!
//! ```text
//! task,label,kind,site,other,radius,n,steps,distance,value,kernel
//! 0,vd,cell,20200,,4,,,,3.82,
//! 2,lef,cell,20200,20250,7,64,64,5,0.41,3
//! 3,exponents,exit_time,20200,,8,,,,64.0,
//! ```
//!
//! `kind` is `cell` for condition and estimate cells and `volume` or
//! `exit_time` for exponent-fit points. `value` is the cell constant or the
//! estimate's base ratio, with `inf` for the infinite sentinel. `kernel` is
//! the exponent kernel of off-diagonal estimate cells.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use harnack_core::conditions::CellDetail;
use harnack_core::Vertex;

use crate::config::OutputConfig;
use crate::run::{RunReport, TaskOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    task: usize,
    label: &'a str,
    kind: &'a str,
    site: Vertex,
    other: Option<Vertex>,
    radius: Option<usize>,
    n: Option<usize>,
    steps: Option<usize>,
    distance: Option<usize>,
    value: String,
    kernel: Option<f64>,
}

fn number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

fn rows(report: &RunReport) -> Vec<CsvRow<'_>> {
    let mut out = Vec::new();
    for (task, t) in report.tasks.iter().enumerate() {
        let label = t.label.as_str();
        let blank = |kind, site| CsvRow {
            task,
            label,
            kind,
            site,
            other: None,
            radius: None,
            n: None,
            steps: None,
            distance: None,
            value: String::new(),
            kernel: None,
        };
        match &t.outcome {
            TaskOutcome::Condition(r) => {
                for c in &r.cells {
                    let other = match c.detail {
                        Some(CellDetail::Compared { other }) => Some(other),
                        Some(CellDetail::Harmonic { boundary }) => Some(boundary),
                        _ => None,
                    };
                    out.push(CsvRow {
                        other,
                        radius: Some(c.radius),
                        value: number(c.value),
                        ..blank("cell", c.site)
                    });
                }
            }
            TaskOutcome::Estimate(r) => {
                for c in &r.cells {
                    out.push(CsvRow {
                        other: Some(c.y),
                        radius: Some(c.radius),
                        n: Some(c.n),
                        steps: Some(c.steps),
                        distance: Some(c.distance),
                        value: number(c.base),
                        kernel: Some(c.kernel),
                        ..blank("cell", c.x)
                    });
                }
            }
            TaskOutcome::Exponents(r) => {
                for s in &r.sites {
                    for (kind, series) in [("volume", &s.volumes), ("exit_time", &s.exit_times)] {
                        for &(radius, v) in series.iter() {
                            out.push(CsvRow {
                                radius: Some(radius),
                                value: number(v),
                                ..blank(kind, s.site)
                            });
                        }
                    }
                }
            }
            TaskOutcome::Failed(_) => {}
        }
    }
    out
}

pub fn write_csv(report: &RunReport, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows(report) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn from_json(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).context("parsing report")
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_json(&text)
}

/// Writes one file in the given format.
pub fn emit_report(report: &RunReport, format: Format, path: &Path) -> Result<()> {
    let bytes = match format {
        Format::Json => to_json(report)?.into_bytes(),
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(report, &mut buf)?;
            buf
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes the JSON report and the CSV table under the resolved output
/// directory and returns their paths.
pub fn emit_all(report: &RunReport, output: &OutputConfig) -> Result<(PathBuf, PathBuf)> {
    let dir = output.resolved_dir();
    let json = dir.join(&output.json);
    let csv = dir.join(&output.csv);
    emit_report(report, Format::Json, &json)?;
    emit_report(report, Format::Csv, &csv)?;
    Ok((json, csv))
}

/// Largest absolute difference between corresponding numbers of two JSON
/// documents, or `None` when their shapes differ. Non-finite sentinels must
/// match exactly.
pub fn max_numeric_difference(a: &serde_json::Value, b: &serde_json::Value) -> Option<f64> {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => Some((x.as_f64()? - y.as_f64()?).abs()),
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
            .iter()
            .zip(y)
            .try_fold(0.0f64, |acc, (p, q)| max_numeric_difference(p, q).map(|d| acc.max(d))),
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => {
            x.iter().try_fold(0.0f64, |acc, (k, p)| {
                max_numeric_difference(p, y.get(k)?).map(|d| f64::max(acc, d))
            })
        }
        _ => (a == b).then_some(0.0),
    }
}

/// The report as JSON without the timing field, for comparisons between
/// runs.
pub fn numeric_content(report: &RunReport) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(report)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timings");
    }
    Ok(v)
}
