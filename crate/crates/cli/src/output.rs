//! CSV tables with a one-line JSON header comment, written atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// A named CSV table. Cells are preformatted so that the body is a pure
/// function of the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Column whose maximum is compared with `--tolerance`, if any.
    pub discrepancy: Option<&'static str>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self { name: name.to_string(), columns: columns.to_vec(), rows: Vec::new(), discrepancy: None }
    }

    pub fn with_discrepancy(mut self, column: &'static str) -> Self {
        self.discrepancy = Some(column);
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column names and rows, without the header comment.
    pub fn body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Largest value of the discrepancy column; NaN cells count as infinite.
    pub fn max_discrepancy(&self) -> Option<f64> {
        let col = self.columns.iter().position(|c| Some(*c) == self.discrepancy)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[col].parse::<f64>().map_or(f64::INFINITY, |v| if v.is_nan() { f64::INFINITY } else { v }))
                .fold(0.0, f64::max),
        )
    }
}

/// Number formatting used for every cell: shortest round-trip form.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

/// Write `# <header>` and the table body to `dir/<name>` via a temp file
/// in the same directory and a rename.
pub fn write_atomic(dir: &Path, table: &Table, header: &Value) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(&table.name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    writeln!(tmp, "# {header}")?;
    tmp.write_all(table.body().as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(path)
}

/// Strip leading `#` lines.
pub fn body_of(text: &str) -> &str {
    let mut rest = text;
    while rest.starts_with('#') {
        rest = rest.split_once('\n').map_or("", |(_, r)| r);
    }
    rest
}
