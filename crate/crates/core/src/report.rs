//! Deterministic CSV and JSON serialization of run results.
//!
//! CSV: one file per table or histogram, named `<command>_<table>.csv`,
//! each starting with `# key=value` metadata lines. Floats are rendered with
//! 9 significant digits, dot decimal separator, LF line endings. JSON: one
//! `<command>.json` document with sorted keys and round-trip float values.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::variation::PatternHistogram;

pub const TOOL_NAME: &str = "sotpim";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("table `{table}`: {detail}")]
    Shape { table: String, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Int,
    Float,
    Text,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Value {
    fn kind(&self) -> ColumnKind {
        match self {
            Value::Int(_) => ColumnKind::Int,
            Value::Float(_) => ColumnKind::Float,
            Value::Text(_) => ColumnKind::Text,
            Value::Bool(_) => ColumnKind::Bool,
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_sig9(*x),
            Value::Text(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(i) => s.serialize_i64(*i),
            Value::Float(x) if x.is_finite() => s.serialize_f64(*x),
            Value::Float(x) => s.serialize_str(&format_sig9(*x)),
            Value::Text(t) => s.serialize_str(t),
            Value::Bool(b) => s.serialize_bool(*b),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Bool(b) => Ok(Value::Bool(b)),
            serde_json::Value::String(s) => Ok(Value::Text(s)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Value::Int(i))
                } else {
                    n.as_f64()
                        .map(Value::Float)
                        .ok_or_else(|| D::Error::custom("unrepresentable number"))
                }
            }
            other => Err(D::Error::custom(format!("unsupported cell {other}"))),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}
impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}
impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}
impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}
impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Text(x.to_string())
    }
}
impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Text(x)
    }
}

/// A named table with typed columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[(&str, ColumnKind)]) -> Self {
        Table {
            name: name.into(),
            columns: columns
                .iter()
                .map(|(n, k)| Column {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Row length and cell types agree with the columns.
    pub fn check(&self) -> Result<(), ReportError> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(ReportError::Shape {
                    table: self.name.clone(),
                    detail: format!(
                        "row {i} has {} cells, expected {}",
                        row.len(),
                        self.columns.len()
                    ),
                });
            }
            for (cell, col) in row.iter().zip(&self.columns) {
                if cell.kind() != col.kind {
                    return Err(ReportError::Shape {
                        table: self.name.clone(),
                        detail: format!("row {i} column `{}` holds {:?}", col.name, cell.kind()),
                    });
                }
            }
        }
        Ok(())
    }

    /// Undo JSON's loss of the int/float distinction using column kinds.
    fn coerce(&mut self) {
        for row in &mut self.rows {
            for (cell, col) in row.iter_mut().zip(&self.columns) {
                if col.kind == ColumnKind::Float {
                    match cell {
                        Value::Int(i) => *cell = Value::Float(*i as f64),
                        Value::Text(s) => {
                            if let Some(x) = parse_non_finite(s) {
                                *cell = Value::Float(x)
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
    }
}

fn parse_non_finite(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedHistogram {
    pub name: String,
    pub histogram: PatternHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_digest: String,
    pub notes: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(
        command: impl Into<String>,
        seed: Option<u64>,
        config_digest: impl Into<String>,
    ) -> Self {
        RunMetadata {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            seed,
            config_digest: config_digest.into(),
            notes: BTreeMap::new(),
        }
    }

    fn comment_lines(&self) -> String {
        let mut s = format!(
            "# tool={} version={}\n# command={}\n",
            self.tool, self.version, self.command
        );
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed={seed}\n"));
        }
        s.push_str(&format!("# config_digest={}\n", self.config_digest));
        for (k, v) in &self.notes {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub tables: Vec<Table>,
    pub histograms: Vec<NamedHistogram>,
}

impl ReportBundle {
    pub fn new(metadata: RunMetadata) -> Self {
        ReportBundle {
            metadata,
            tables: Vec::new(),
            histograms: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&self) -> Result<(), ReportError> {
        self.tables.iter().try_for_each(Table::check)
    }
}

/// `x` with 9 significant digits; positional for moderate magnitudes,
/// scientific otherwise. Trailing zeros are trimmed.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Hex SHA-256 of the canonical JSON rendering of `value`.
pub fn digest_of<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

fn write_csv_file(
    path: &Path,
    comment: &str,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), ReportError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    let body = writer.into_inner().map_err(|e| ReportError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    let mut out = comment.as_bytes().to_vec();
    out.extend_from_slice(&body);
    fs::write(path, out).map_err(io_err(path))
}

/// Write the bundle as CSV files into `dir`; returns the paths written.
pub fn emit_csv(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    bundle.check()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = &bundle.metadata;
    let comment = meta.comment_lines();
    let mut written = Vec::new();

    let path = dir.join(format!("{}_metadata.csv", meta.command));
    let mut rows = vec![
        vec!["tool".to_string(), meta.tool.clone()],
        vec!["version".to_string(), meta.version.clone()],
        vec!["command".to_string(), meta.command.clone()],
    ];
    if let Some(seed) = meta.seed {
        rows.push(vec!["seed".to_string(), seed.to_string()]);
    }
    rows.push(vec![
        "config_digest".to_string(),
        meta.config_digest.clone(),
    ]);
    for (k, v) in &meta.notes {
        rows.push(vec![k.clone(), v.clone()]);
    }
    write_csv_file(
        &path,
        &comment,
        &["key".to_string(), "value".to_string()],
        &rows,
    )?;
    written.push(path);

    for table in &bundle.tables {
        let path = dir.join(format!("{}_{}.csv", meta.command, table.name));
        let header: Vec<String> = table.columns.iter().map(|c| c.name.clone()).collect();
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| r.iter().map(Value::render).collect())
            .collect();
        write_csv_file(&path, &comment, &header, &rows)?;
        written.push(path);
    }

    for named in &bundle.histograms {
        let h = &named.histogram;
        let path = dir.join(format!("{}_{}.csv", meta.command, named.name));
        let mut comment = comment.clone();
        comment.push_str(&format!("# observable={} unit={}\n", h.observable, h.unit));
        if let Some(o) = &h.overlap {
            comment.push_str(&format!(
                "# overlap_fraction={} hold={} switch={}\n",
                format_sig9(o.fraction),
                o.hold_patterns.join(";"),
                o.switch_patterns.join(";")
            ));
        }
        let mut header = vec!["bin_lo".to_string(), "bin_hi".to_string()];
        header.extend(h.series.iter().map(|(l, _)| format!("count_{l}")));
        let rows: Vec<Vec<String>> = (0..h.edges.len().saturating_sub(1))
            .map(|b| {
                let mut row = vec![format_sig9(h.edges[b]), format_sig9(h.edges[b + 1])];
                row.extend(h.series.iter().map(|(_, c)| c[b].to_string()));
                row
            })
            .collect();
        write_csv_file(&path, &comment, &header, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Write the bundle as one JSON document at `path`.
pub fn emit_json(bundle: &ReportBundle, path: &Path) -> Result<(), ReportError> {
    bundle.check()?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    // serde_json::Value keeps object keys sorted
    let doc = serde_json::to_value(bundle)?;
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Parse a document written by [`emit_json`].
pub fn read_json(path: &Path) -> Result<ReportBundle, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut bundle: ReportBundle = serde_json::from_str(&text)?;
    for t in &mut bundle.tables {
        t.coerce();
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.1), "0.1");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.440482482408333e-4), "0.000244048248");
        assert_eq!(format_sig9(1.772775848406764e-6), "1.77277585e-6");
        assert_eq!(format_sig9(-5092.958178940651), "-5092.95818");
        assert_eq!(format_sig9(9.9999999999), "10");
        assert_eq!(format_sig9(1.0e12), "1e12");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(f64::INFINITY), "inf");
    }

    #[test]
    fn rendered_values_parse_back_within_tolerance() {
        for x in [
            1.2345678912345e-4,
            331042.28163114237,
            -0.75,
            6.614770621390563e-13,
        ] {
            let y: f64 = format_sig9(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 1e-8, "{x} -> {y}");
        }
    }

    #[test]
    fn shape_errors_detected() {
        let mut t = Table::new("t", &[("a", ColumnKind::Int), ("b", ColumnKind::Float)]);
        t.push(vec![1usize.into(), 2.0.into()]);
        assert!(t.check().is_ok());
        t.push(vec![1usize.into()]);
        assert!(t.check().is_err());
        let mut u = Table::new("u", &[("a", ColumnKind::Int)]);
        u.push(vec![1.5.into()]);
        assert!(u.check().is_err());
    }

    #[test]
    fn digest_is_stable() {
        let a = digest_of(&BTreeMap::from([("x", 1.0), ("y", 2.0)])).unwrap();
        let b = digest_of(&BTreeMap::from([("y", 2.0), ("x", 1.0)])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}
