use std::path::Path;

use serde_json::{Map, Value};

use crate::error::CliError;

/// Placeholder for a cell whose model or test failed.
pub const MISSING: &str = "\u{2014}";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
    }

    /// Space-padded columns for terminal reading.
    pub fn to_aligned(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    /// Rows as objects; numeric cells become numbers and missing cells null.
    pub fn to_json_value(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let obj: Map<String, Value> = self
                        .header
                        .iter()
                        .zip(r)
                        .map(|(h, c)| (h.clone(), cell_value(c)))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

fn cell_value(c: &str) -> Value {
    if c == MISSING {
        return Value::Null;
    }
    match c.parse::<f64>() {
        Ok(v) if v.is_finite() && !c.starts_with('+') => serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number),
        _ => Value::String(c.to_string()),
    }
}

pub fn json_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Writes `<name>.csv`, plus `<name>.json` in JSON mode, and returns the text
/// for standard output.
pub fn emit(dir: &Path, name: &str, table: &Table, json: bool) -> Result<String, CliError> {
    std::fs::create_dir_all(dir)?;
    let csv = table.to_csv();
    std::fs::write(dir.join(format!("{name}.csv")), &csv)?;
    if json {
        let text = json_text(&table.to_json_value());
        std::fs::write(dir.join(format!("{name}.json")), &text)?;
        return Ok(text);
    }
    Ok(csv)
}

pub fn secs(v: f64) -> String {
    format!("{v:.3}")
}

pub fn real(v: f64) -> String {
    format!("{v:.6}")
}

pub fn prob(v: f64) -> String {
    format!("{v:.6e}")
}
