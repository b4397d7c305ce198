//! Result tables and plot-ready files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::run::{ResultRow, SimulationResult};
use crate::collision::{classify, CoefficientTable, CollisionIndex};
use crate::error::{Error, Result};
use crate::signal::C64;

/// Column order of the main table.
pub const COLUMNS: [&str; 13] = [
    "scenario",
    "case",
    "span",
    "distance_km",
    "p_nli_w",
    "p_nli_db",
    "p_phase_w",
    "p_circular_w",
    "cnr_pct",
    "n_opt",
    "gn_w",
    "egn_w",
    "egn_adapted_w",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    /// One JSON object per line.
    Records,
}

impl ReportFormat {
    fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Records => "jsonl",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "records" => Ok(ReportFormat::Records),
            other => Err(Error::Config(format!("unknown format {other:?}; expected csv or records"))),
        }
    }
}

/// Everything written by [`emit_report`].
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    /// (scenario, ACF with index k at lag k − L) for the phase ACF figure.
    pub acf: Vec<(String, Vec<f64>)>,
}

impl Report {
    pub fn new(rows: Vec<ResultRow>) -> Self {
        Report { rows, acf: Vec::new() }
    }

    /// Adds the ACF of the last span of a simulation.
    pub fn with_acf(mut self, sim: &SimulationResult) -> Self {
        if let Some(a) = sim.acf.last() {
            self.acf.push((sim.scenario.clone(), a.clone()));
        }
        self
    }
}

#[derive(Serialize)]
struct PowerPoint<'a> {
    scenario: &'a str,
    distance_km: f64,
    p_nli_w: f64,
    p_phase_w: f64,
    p_circular_w: f64,
    gn_w: Option<f64>,
    egn_w: Option<f64>,
    egn_adapted_w: Option<f64>,
}

#[derive(Serialize)]
struct CnrPoint<'a> {
    scenario: &'a str,
    distance_km: f64,
    cnr_pct: f64,
}

#[derive(Serialize)]
struct AcfPoint {
    lag: i64,
    acf: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        ReportFormat::Records => {
            let mut w = BufWriter::new(File::create(path)?);
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// File-system safe form of a scenario id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Writes the main table plus the power, CNR and ACF figure files into
/// `dir` and returns the paths written. Rows are sorted by scenario and span
/// so identical inputs give identical bytes.
pub fn emit_report(report: &Report, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::invalid("refusing to write a report without rows"));
    }
    std::fs::create_dir_all(dir)?;
    let mut rows = report.rows.clone();
    rows.sort_by(|a, b| a.scenario.cmp(&b.scenario).then(a.span.cmp(&b.span)));
    let ext = format.extension();
    let mut written = Vec::new();

    let main = dir.join(format!("results.{ext}"));
    write_rows(&main, &rows, format)?;
    written.push(main);

    let power: Vec<_> = rows
        .iter()
        .map(|r| PowerPoint {
            scenario: &r.scenario,
            distance_km: r.distance_km,
            p_nli_w: r.p_nli_w,
            p_phase_w: r.p_phase_w,
            p_circular_w: r.p_circular_w,
            gn_w: r.gn_w,
            egn_w: r.egn_w,
            egn_adapted_w: r.egn_adapted_w,
        })
        .collect();
    let path = dir.join(format!("power_vs_distance.{ext}"));
    write_rows(&path, &power, format)?;
    written.push(path);

    let cnr: Vec<_> =
        rows.iter().map(|r| CnrPoint { scenario: &r.scenario, distance_km: r.distance_km, cnr_pct: r.cnr_pct }).collect();
    let path = dir.join(format!("cnr_vs_distance.{ext}"));
    write_rows(&path, &cnr, format)?;
    written.push(path);

    let mut acf = report.acf.clone();
    acf.sort_by(|a, b| a.0.cmp(&b.0));
    for (id, values) in &acf {
        let l = (values.len() / 2) as i64;
        let points: Vec<_> =
            values.iter().enumerate().map(|(k, &v)| AcfPoint { lag: k as i64 - l, acf: v }).collect();
        let path = dir.join(format!("acf_{}.{ext}", file_stem(id)));
        write_rows(&path, &points, format)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct CoefficientRecord {
    h: i64,
    k: i64,
    m: i64,
    kind: &'static str,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct CurveRecord {
    h: i64,
    k: i64,
    m: i64,
    z_m: f64,
    re: f64,
    im: f64,
}

/// Writes a collision coefficient table and accumulation curves.
pub fn emit_collisions(
    table: &CoefficientTable,
    curves: &[(CollisionIndex, Vec<(f64, C64)>)],
    dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>> {
    if table.entries.is_empty() && curves.is_empty() {
        return Err(Error::invalid("refusing to write empty collision output"));
    }
    std::fs::create_dir_all(dir)?;
    let ext = format.extension();
    let mut written = Vec::new();
    if !table.entries.is_empty() {
        let rows: Vec<_> = table
            .entries
            .iter()
            .map(|(i, x)| CoefficientRecord { h: i.h, k: i.k, m: i.m, kind: classify(*i).label(), re: x.re, im: x.im })
            .collect();
        let path = dir.join(format!("collision_coefficients.{ext}"));
        write_rows(&path, &rows, format)?;
        written.push(path);
    }
    if !curves.is_empty() {
        let rows: Vec<_> = curves
            .iter()
            .flat_map(|(i, c)| c.iter().map(move |(z, x)| CurveRecord { h: i.h, k: i.k, m: i.m, z_m: *z, re: x.re, im: x.im }))
            .collect();
        let path = dir.join(format!("collision_curves.{ext}"));
        write_rows(&path, &rows, format)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scenario: &str, span: usize) -> ResultRow {
        ResultRow {
            scenario: scenario.into(),
            case: "A".into(),
            span,
            distance_km: 80.0 * span as f64,
            p_nli_w: 1e-6 * span as f64,
            p_nli_db: -33.0,
            p_phase_w: 4e-7,
            p_circular_w: 6e-7,
            cnr_pct: 60.0,
            n_opt: 20,
            gn_w: Some(2e-6),
            egn_w: None,
            egn_adapted_w: None,
        }
    }

    #[test]
    fn empty_rows_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(emit_report(&Report::default(), &out, ReportFormat::Csv).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn csv_header_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = Report::new(vec![row("b", 2), row("b", 1), row("a", 1)]);
        report.acf.push(("b".into(), vec![0.5, 1.0, 0.5]));
        let a = emit_report(&report, &dir.path().join("1"), ReportFormat::Csv).unwrap();
        let b = emit_report(&report, &dir.path().join("2"), ReportFormat::Csv).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let text = std::fs::read_to_string(&a[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        assert!(lines.next().unwrap().starts_with("a,A,1,"));
        let acf = std::fs::read_to_string(dir.path().join("1/acf_b.csv")).unwrap();
        assert_eq!(acf, "lag,acf\n-1,0.5\n0,1.0\n1,0.5\n");
    }

    #[test]
    fn records_are_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&Report::new(vec![row("a", 1)]), dir.path(), ReportFormat::Records).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["n_opt"], 20);
        assert!(v["egn_w"].is_null());
    }
}
