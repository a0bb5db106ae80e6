//! Tables, assertions and the verdict printed on stdout.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::Format;

/// Rows of one experiment: CSV cells plus the JSON form of each row.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub records: Vec<Value>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new(), records: Vec::new() }
    }

    pub fn push<T: Serialize>(&mut self, cells: Vec<String>, record: &T) -> Result<()> {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
        self.records.push(serde_json::to_value(record)?);
        Ok(())
    }

    pub fn write(&self, path: &Path, format: Format, experiment: &str, assertions: &[Assertion]) -> Result<()> {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = std::io::BufWriter::new(file);
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                w.flush()?;
            }
            Format::Json => {
                let doc = serde_json::json!({
                    "experiment": experiment,
                    "rows": self.records,
                    "assertions": assertions,
                });
                serde_json::to_writer_pretty(&mut out, &doc)?;
                writeln!(out)?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

/// Shortest round-trip text; exponent form for very small or large values.
pub fn num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_case: Option<Value>,
}

impl Assertion {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion { name: name.into(), passed, detail: detail.into(), failing_case: None }
    }

    pub fn with_case(mut self, case: Option<Value>) -> Self {
        if !self.passed {
            self.failing_case = case;
        }
        self
    }
}

#[derive(Debug, Serialize)]
pub struct Verdict {
    pub experiment: String,
    pub passed: bool,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub assertions: Vec<Assertion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_text() {
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(1.5), "1.5");
        assert_eq!(num(4.440892098500626e-16), "4.440892098500626e-16");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(100.0), "100");
    }
}
