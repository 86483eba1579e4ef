//! CSV tables and the run manifest.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// 17 significant digits, so values survive a text round trip.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

/// Header plus rows; the first column is always `t`.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub quantity: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(quantity: &str, columns: &[&str]) -> Self {
        let mut header = vec!["t".to_string()];
        header.extend(columns.iter().map(|c| c.to_string()));
        Self { quantity: quantity.into(), header, rows: Vec::new() }
    }

    pub fn push<I, C>(&mut self, t: f64, cells: I)
    where
        I: IntoIterator<Item = C>,
        C: Into<Cell>,
    {
        let mut row = vec![Cell::Num(t)];
        row.extend(cells.into_iter().map(Into::into));
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self, scenario: &str) -> String {
        format!("{scenario}_{}.csv", self.quantity)
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, c) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                match c {
                    Cell::Num(x) => out.push_str(&format_value(*x)),
                    Cell::Text(s) => out.push_str(s),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Column by header name, numeric cells only.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[k] {
                    Cell::Num(x) => *x,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub schema_version: u32,
    pub version: String,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub summary: Value,
    pub config: Value,
}

pub(crate) fn write_all(dir: &Path, scenario: &str, tables: &[CsvTable], manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    for t in tables {
        fs::write(dir.join(t.file_name(scenario)), t.render())?;
    }
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = format_value(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        for x in [std::f64::consts::PI, -1.0 / 3.0, 6.02e23, 5e-324] {
            assert_eq!(format_value(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn render_layout() {
        let mut t = CsvTable::new("rho11", &["value", "label"]);
        t.push(0.0, [Cell::Num(1.0), Cell::from("a")]);
        t.push(0.5, [Cell::Num(f64::NAN), Cell::from("b")]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,value,label");
        assert_eq!(lines[1], "0.0000000000000000e0,1.0000000000000000e0,a");
        assert_eq!(lines[2], "5.0000000000000000e-1,NaN,b");
        assert_eq!(t.file_name("demo"), "demo_rho11.csv");
        assert_eq!(t.column("value").unwrap()[0], 1.0);
    }
}
