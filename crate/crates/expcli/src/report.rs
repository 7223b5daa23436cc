//! Experiment reports and their CSV, JSON and SVG renderings.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Flag(bool),
    /// Undefined entry, rendered as `---`.
    Missing,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn count(n: usize) -> Self {
        Cell::Int(n as i64)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(_) | Cell::Missing => Value::Null,
            Cell::Text(s) => json!(s),
            Cell::Flag(b) => json!(b),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Flag(b) => write!(f, "{b}"),
            Cell::Missing => f.write_str("---"),
        }
    }
}

/// Comparison of a Monte Carlo metric against its closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub row: usize,
    pub label: String,
    pub metric: String,
    pub monte_carlo: f64,
    pub oracle: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Qualitative property a run must satisfy, such as monotonicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

/// `|mc - oracle| / max(|oracle|, 1e-12)`.
pub fn relative_error(monte_carlo: f64, oracle: f64) -> f64 {
    (monte_carlo - oracle).abs() / oracle.abs().max(1e-12)
}

/// Line-chart layout: `x` against each series, optionally restricted to
/// rows whose `filter` column has the given text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub series: Vec<String>,
    /// Columns drawn dashed, as closed-form overlays.
    pub oracle_series: Vec<String>,
    pub filter: Option<(String, String)>,
    pub log_scale: bool,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub config: Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub checks: Vec<Check>,
    pub assertions: Vec<Assertion>,
    pub summary: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    pub plot: Option<PlotSpec>,
    pub wall_clock_seconds: f64,
}

impl Report {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed_assertions(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    pub fn assertion(&self, label: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.label == label)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column, in row order.
    pub fn column_values(&self, name: &str) -> Vec<Option<f64>> {
        match self.column_index(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn csv_string(&self) -> String {
        let rows: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::to_string).collect()).collect();
        write_csv_records(&self.columns, &rows)
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                Value::Object(
                    self.columns
                        .iter()
                        .zip(r)
                        .map(|(c, v)| (c.clone(), v.to_json()))
                        .collect(),
                )
            })
            .collect();
        json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "config": self.config,
            "columns": self.columns,
            "rows": rows,
            "checks": self.checks,
            "assertions": self.assertions,
            "summary": self.summary,
            "warnings": self.warnings,
            "wall_clock_seconds": self.wall_clock_seconds,
        })
    }

    pub fn svg_string(&self) -> String {
        crate::svg::render(self)
    }
}

/// Serializes a header and string rows as RFC 4180 CSV.
pub fn write_csv_records(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
}

/// Parses CSV text into its header and rows of raw cells.
pub fn parse_csv_records(text: &str) -> std::result::Result<(Vec<String>, Vec<Vec<String>>), csv::Error> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

/// Receives metric rows as an experiment produces them.
pub trait RowSink: Send {
    fn header(&mut self, columns: &[String]) -> Result<()>;
    fn row(&mut self, cells: &[Cell]) -> Result<()>;
}

pub struct NullSink;

impl RowSink for NullSink {
    fn header(&mut self, _: &[String]) -> Result<()> {
        Ok(())
    }

    fn row(&mut self, _: &[Cell]) -> Result<()> {
        Ok(())
    }
}

/// Appends each row to a CSV file and flushes it, so partial runs can be
/// inspected.
pub struct CsvFileSink {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvFileSink {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file),
        })
    }

    fn write(&mut self, record: Vec<String>) -> Result<()> {
        let path = self.path.clone();
        self.writer
            .write_record(&record)
            .map_err(|e| CliError::io(&path, e.into()))?;
        self.writer.flush().map_err(|e| CliError::io(&path, e))
    }
}

impl RowSink for CsvFileSink {
    fn header(&mut self, columns: &[String]) -> Result<()> {
        self.write(columns.to_vec())
    }

    fn row(&mut self, cells: &[Cell]) -> Result<()> {
        self.write(cells.iter().map(Cell::to_string).collect())
    }
}

/// Accumulates rows and checks, forwarding rows to a sink.
pub struct ReportBuilder<'a> {
    report: Report,
    sink: &'a mut dyn RowSink,
    started: std::time::Instant,
}

impl<'a> ReportBuilder<'a> {
    pub fn new(experiment: &str, seed: u64, config: Value, columns: &[&str], sink: &'a mut dyn RowSink) -> Result<Self> {
        let columns: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        sink.header(&columns)?;
        Ok(Self {
            report: Report {
                experiment: experiment.to_string(),
                seed,
                config,
                columns,
                rows: Vec::new(),
                checks: Vec::new(),
                assertions: Vec::new(),
                summary: BTreeMap::new(),
                warnings: Vec::new(),
                plot: None,
                wall_clock_seconds: 0.0,
            },
            sink,
            started: std::time::Instant::now(),
        })
    }

    /// Appends a row and returns its index.
    pub fn push_row(&mut self, cells: Vec<Cell>) -> Result<usize> {
        assert_eq!(cells.len(), self.report.columns.len(), "row width must match the header");
        self.sink.row(&cells)?;
        self.report.rows.push(cells);
        Ok(self.report.rows.len() - 1)
    }

    /// Records a Monte Carlo versus closed-form comparison.
    pub fn check(&mut self, row: usize, label: &str, metric: &str, monte_carlo: f64, oracle: f64, tolerance: f64) {
        let relative_error = relative_error(monte_carlo, oracle);
        self.report.checks.push(Check {
            row,
            label: label.to_string(),
            metric: metric.to_string(),
            monte_carlo,
            oracle,
            relative_error,
            tolerance,
            passed: relative_error <= tolerance,
        });
    }

    pub fn assert(&mut self, label: &str, passed: bool, detail: impl Into<String>) {
        self.report.assertions.push(Assertion {
            label: label.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        self.report
            .summary
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.report.warnings.push(message.into());
    }

    pub fn plot(&mut self, spec: PlotSpec) {
        self.report.plot = Some(spec);
    }

    pub fn finish(mut self) -> Report {
        self.report.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        self.report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format `{other}` (expected csv, json or svg)")),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

/// Writes `<experiment>.<ext>` for each format into `out_dir`.
pub fn emit_report(report: &Report, formats: &[Format], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut paths = Vec::new();
    for &format in formats {
        let path = out_dir.join(format!("{}.{}", report.experiment, format.extension()));
        let body = match format {
            Format::Csv => report.csv_string(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&report.to_json()).expect("report JSON is serializable");
                s.push('\n');
                s
            }
            Format::Svg => report.svg_string(),
        };
        let mut file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        file.write_all(body.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_rendering() {
        assert_eq!(Cell::Num(0.5).to_string(), "0.5");
        assert_eq!(Cell::Num(1e-20).to_string().parse::<f64>().unwrap(), 1e-20);
        assert_eq!(Cell::Missing.to_string(), "---");
        assert_eq!(Cell::Flag(true).to_string(), "true");
    }

    #[test]
    fn quoting_round_trips() {
        let header = vec!["a".to_string(), "b,c".to_string()];
        let rows = vec![vec!["x \"y\"".to_string(), "1.5".to_string()]];
        let text = write_csv_records(&header, &rows);
        let (h, r) = parse_csv_records(&text).unwrap();
        assert_eq!((h, r), (header, rows));
    }
}
