//! Deterministic CSV tables and the JSON run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int,
    Float,
    Text,
    Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Flag(bool),
    /// Missing value, written as an empty field. Allowed in any column.
    Empty,
}

impl Cell {
    fn fits(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Cell::Int(_), ColumnType::Int)
                | (Cell::Float(_), ColumnType::Float)
                | (Cell::Text(_), ColumnType::Text)
                | (Cell::Flag(_), ColumnType::Flag)
                | (Cell::Empty, _)
        )
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => quote(s),
            Cell::Flag(b) => (if *b { "1" } else { "0" }).to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// 17 significant digits in exponent form; `nan`, `inf`, `-inf` for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: Vec<(&'static str, ColumnType)>,
}

impl Schema {
    pub fn new(columns: &[(&'static str, ColumnType)]) -> Self {
        Self { columns: columns.to_vec() }
    }
}

/// Renders rows as CSV text after checking them against the schema.
pub fn render_csv(rows: &[Vec<Cell>], schema: &Schema) -> Result<String, ReportError> {
    let mut out = String::new();
    let header: Vec<&str> = schema.columns.iter().map(|(n, _)| *n).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, row) in rows.iter().enumerate() {
        if row.len() != schema.columns.len() {
            return Err(ReportError::Schema {
                row: r,
                message: format!("{} cells for {} columns", row.len(), schema.columns.len()),
            });
        }
        let mut fields = Vec::with_capacity(row.len());
        for (cell, (name, ty)) in row.iter().zip(&schema.columns) {
            if !cell.fits(*ty) {
                return Err(ReportError::Schema { row: r, message: format!("column `{name}` expects {ty:?}, got {cell:?}") });
            }
            fields.push(cell.render());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Writes a CSV table (comma separated, header row, LF line endings).
pub fn emit_report(rows: &[Vec<Cell>], schema: &Schema, path: &Path) -> Result<(), ReportError> {
    let text = render_csv(rows, schema)?;
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Run manifest written next to the tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub config: Vec<(String, String, String)>,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn to_json(&self) -> serde_json::Value {
        let config: serde_json::Map<String, serde_json::Value> = self
            .config
            .iter()
            .map(|(s, k, v)| (format!("{s}.{k}"), serde_json::Value::String(v.clone())))
            .collect();
        serde_json::json!({
            "scenario": self.scenario,
            "seed": self.seed,
            "config": config,
            "files": self.files,
            "version": env!("CARGO_PKG_VERSION"),
            "os": std::env::consts::OS,
            "wall_time_s": self.wall_time_s,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), ReportError> {
        let text = serde_json::to_string_pretty(&self.to_json()).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(io_err(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(&[("n", ColumnType::Int), ("x", ColumnType::Float), ("tag", ColumnType::Text)])
    }

    #[test]
    fn header_only_for_empty_rows() {
        assert_eq!(render_csv(&[], &schema()).unwrap(), "n,x,tag\n");
    }

    #[test]
    fn schema_mismatch_rejected() {
        let bad = vec![vec![Cell::Float(1.0), Cell::Float(2.0), Cell::Empty]];
        assert!(matches!(render_csv(&bad, &schema()), Err(ReportError::Schema { row: 0, .. })));
        let short = vec![vec![Cell::Int(1)]];
        assert!(render_csv(&short, &schema()).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn text_is_quoted_when_needed() {
        let rows = vec![vec![Cell::Int(3), Cell::Empty, Cell::from("a,b")]];
        assert_eq!(render_csv(&rows, &schema()).unwrap(), "n,x,tag\n3,,\"a,b\"\n");
    }

    #[test]
    fn writes_file_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        emit_report(&[vec![Cell::Int(1), Cell::Float(0.5), Cell::from("x")]], &schema(), &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "n,x,tag\n1,5.0000000000000000e-1,x\n");
        let m = Manifest { scenario: "s".into(), seed: 3, config: vec![], files: vec!["t.csv".into()], wall_time_s: 0.0 };
        m.write(&dir.path().join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(v["seed"], 3);
    }
}
