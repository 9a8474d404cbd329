//! Per-iteration experiment metrics.

use serde_json::Value;

use crate::error::{CoreError, Result};

/// Ordered rows of named numeric columns plus a final summary block.
///
/// Rows keep a monotone iteration index and a non-decreasing cumulative
/// sample count; `push_row` enforces both.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    pub summary: Value,
}

impl RunRecord {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new(), summary: Value::Null }
    }

    /// Append a row. The first column is treated as the iteration index and
    /// any column named `samples_cum` must be non-decreasing.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(CoreError::InvalidInput("row width does not match columns".into()));
        }
        if let Some(prev) = self.rows.last() {
            if !(row[0] > prev[0]) {
                return Err(CoreError::InvalidInput("iteration index must increase".into()));
            }
            if let Some(i) = self.columns.iter().position(|c| *c == "samples_cum") {
                if row[i] + 1e-9 < prev[i] {
                    return Err(CoreError::InvalidInput("samples_cum must be non-decreasing".into()));
                }
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Render as CSV; `header_lines` go first as `#`-prefixed comments
    /// (provenance: config hash, seed).
    pub fn to_csv(&self, header_lines: &[String]) -> String {
        let mut out = String::new();
        for line in header_lines {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&format_cell(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn last_value(&self, column: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| *c == column)?;
        self.rows.last().map(|r| r[i])
    }

    pub fn column(&self, column: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == column)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
