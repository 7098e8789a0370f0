//! CSV result tables with a `#`-prefixed metadata header.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
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

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

/// Shortest decimal string that parses back to the same `f64`; never
/// locale dependent.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Int(i) => i.to_string(),
        Cell::Real(v) => format_real(*v),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        ResultTable { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the columns of {}", self.name);
        self.rows.push(row);
    }

    /// Column header and rows, without metadata.
    pub fn body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(format_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn render(&self, meta: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&self.body());
        out
    }

    pub fn write(&self, dir: &Path, meta: &[(String, String)]) -> Result<std::path::PathBuf, CliError> {
        let path = dir.join(&self.name);
        std::fs::write(&path, self.render(meta)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Table body of a rendered CSV file: everything after the metadata lines.
pub fn strip_metadata(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}
