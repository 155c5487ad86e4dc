//! CSV and JSON writers. Every file starts with the provenance needed to
//! reproduce it; nothing time- or host-dependent goes in.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Value,
    pub beta: f64,
    pub k_min: f64,
    /// Smallest and largest Fock cutoff used, when the command evaluates states.
    pub cutoffs: Option<(usize, usize)>,
    pub tolerances: Value,
}

impl Provenance {
    pub fn new(
        command: &'static str,
        config: Value,
        beta: f64,
        k_min: f64,
        tolerances: Value,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            beta,
            k_min,
            cutoffs: None,
            tolerances,
        }
    }

    pub fn track_cutoff(&mut self, cutoff: usize) {
        self.cutoffs = Some(match self.cutoffs {
            None => (cutoff, cutoff),
            Some((lo, hi)) => (lo.min(cutoff), hi.max(cutoff)),
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

/// 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        format!("{v}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut s = String::new();
        s.push_str(&format!("# {} {}\n", prov.tool, prov.version));
        s.push_str(&format!("# command: {}\n", prov.command));
        s.push_str(&format!("# config: {}\n", prov.config));
        s.push_str(&format!("# beta: {}\n", prov.beta));
        s.push_str(&format!("# k_min: {:e}\n", prov.k_min));
        match prov.cutoffs {
            Some((lo, hi)) => s.push_str(&format!("# cutoffs: {lo}..{hi}\n")),
            None => s.push_str("# cutoffs: n/a\n"),
        }
        s.push_str(&format!("# tolerances: {}\n", prov.tolerances));
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self, prov: &Provenance) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "provenance": prov,
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (csv or json)")),
        }
    }
}

pub fn render(table: &Table, prov: &Provenance, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(prov),
        Format::Json => table.to_json(prov),
    }
}

/// Writes to `path`, or stdout when there is none.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).context("writing stdout")?;
            out.flush().context("writing stdout")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0), "1.00000000000e0");
        assert_eq!(fmt_num(-2.5e-7), "-2.50000000000e-7");
        assert_eq!(fmt_num(1.0 / 3.0), "3.33333333333e-1");
    }

    #[test]
    fn csv_layout() {
        let prov = Provenance::new("test", json!({"a": 1}), 1.0, 1e-6, json!({"tol": 1e-15}));
        let mut t = Table::new(&["x", "y"]);
        t.push(vec![1.0.into(), "a".into()]);
        let csv = t.to_csv(&prov);
        assert!(csv.starts_with("# scissor-qkd-cli 0.1.0\n"));
        assert!(csv.ends_with("x,y\n1.00000000000e0,a\n"));
        assert!(!csv.contains('\r'));
        let js: Value = serde_json::from_str(&t.to_json(&prov)).unwrap();
        assert_eq!(js["schema_version"], "1");
        assert_eq!(js["rows"][0][1], "a");
    }
}
