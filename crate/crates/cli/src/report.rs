//! Run reports: JSON, an aligned text summary and CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use detector_forge::linalg::{Matrix, Vector};
use detector_forge::simulate::McReport;
use serde::Serialize;
use serde_json::{json, Map, Value};

/// A table with a header row; cells are JSON scalars.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(cell))?;
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Table of MC reports, one row per label.
pub fn mc_table(label: &str, rows: &[(Value, &McReport)]) -> Table {
    let mut t = Table::new(&[label, "estimate", "std_error", "n", "bound", "pass"]);
    for (key, r) in rows {
        t.push(vec![key.clone(), json!(r.estimate), json!(r.std_error), json!(r.n), json!(r.bound), json!(r.pass)]);
    }
    t
}

pub fn vec_json(v: &Vector) -> Value {
    json!(v.as_slice())
}

pub fn mat_json(m: &Matrix) -> Value {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    json!(rows)
}

#[derive(Debug, Default)]
pub struct Report {
    pub task: String,
    pub config: Value,
    pub results: Map<String, Value>,
    pub warnings: Vec<String>,
    pub tables: BTreeMap<String, Table>,
}

impl Report {
    pub fn new(task: &str, config: Value) -> Self {
        Self { task: task.to_string(), config, ..Default::default() }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn table(&mut self, name: &str, t: Table) {
        self.tables.insert(name.to_string(), t);
    }

    pub fn to_json(&self) -> Value {
        let tables: Map<String, Value> =
            self.tables.iter().map(|(k, t)| (k.clone(), serde_json::to_value(t).unwrap_or(Value::Null))).collect();
        json!({
            "task": self.task,
            "config": self.config,
            "results": Value::Object(self.results.clone()),
            "warnings": self.warnings,
            "tables": tables,
        })
    }

    pub fn json_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).unwrap_or_default();
        s.push('\n');
        s
    }

    /// Scalars as `key  value` lines, then each table with padded columns.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task  {}", self.task);
        let scalars: Vec<(&String, String)> = self
            .results
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Number(_) | Value::Bool(_) | Value::String(_) => Some((k, cell(v))),
                _ => None,
            })
            .collect();
        let w = scalars.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &scalars {
            let _ = writeln!(out, "{k:<w$}  {v}");
        }
        for msg in &self.warnings {
            let _ = writeln!(out, "warning: {msg}");
        }
        for (name, t) in &self.tables {
            let _ = writeln!(out, "\n[{name}]");
            let cells: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
            let widths: Vec<usize> = (0..t.columns.len())
                .map(|j| cells.iter().map(|r| r[j].len()).chain([t.columns[j].len()]).max().unwrap_or(0))
                .collect();
            let line = |items: &[String]| {
                items.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
            };
            let _ = writeln!(out, "{}", line(&t.columns));
            for r in &cells {
                let _ = writeln!(out, "{}", line(r));
            }
        }
        out
    }

    /// `<out>`, `<out>.txt` and one `<stem>.<table>.csv` per table.
    pub fn write(&self, out: &Path) -> io::Result<Vec<PathBuf>> {
        let mut written = vec![out.to_path_buf()];
        fs::write(out, self.json_text())?;
        let txt = sibling(out, "txt");
        fs::write(&txt, self.summary())?;
        written.push(txt);
        for (name, t) in &self.tables {
            let p = sibling(out, &format!("{name}.csv"));
            fs::write(&p, t.to_csv()?)?;
            written.push(p);
        }
        Ok(written)
    }
}

fn sibling(out: &Path, ext: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.{ext}"))
}
