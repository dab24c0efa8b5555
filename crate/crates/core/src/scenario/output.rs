use super::{ResultBundle, ScenarioError};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(format_cell).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Num(v) => format_num(*v),
        Cell::Int(i) => i.to_string(),
        Cell::Text(t) if t.contains([',', '"', '\n']) => format!("\"{}\"", t.replace('"', "\"\"")),
        Cell::Text(t) => t.clone(),
    }
}

fn summary_json(b: &ResultBundle) -> serde_json::Value {
    let summary: serde_json::Map<String, serde_json::Value> = b
        .summary
        .iter()
        .map(|(k, v)| {
            let jv = if v.is_finite() { serde_json::json!(v) } else { serde_json::json!(format_num(*v)) };
            (k.clone(), jv)
        })
        .collect();
    serde_json::json!({
        "provenance": b.provenance,
        "summary": summary,
        "tables": b.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
    })
}

fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Writes `summary.json` and the CSV tables under `dir`, each file via a
/// temporary sibling and a rename. Returns the written paths.
pub fn write_bundle(b: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    let io = |e: std::io::Error, p: &Path| ScenarioError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let mut written = Vec::new();
    for t in &b.tables {
        let p = dir.join(format!("{}.csv", t.name));
        write_atomic(&p, t.to_csv().as_bytes()).map_err(|e| io(e, &p))?;
        written.push(p);
    }
    let p = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary_json(b)).expect("summary serializes") + "\n";
    write_atomic(&p, text.as_bytes()).map_err(|e| io(e, &p))?;
    written.push(p);
    Ok(written)
}
