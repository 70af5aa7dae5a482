//! Result tables: CSV with a JSON sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// Shortest text that parses back to the same `f64`. Integral values are
/// written without a fractional part, infinities as `inf`/`-inf`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 && !(v == 0.0 && v.is_sign_negative()) {
        format!("{}", v as i64)
    } else if v == 0.0 {
        "-0".to_string()
    } else {
        format!("{v:?}")
    }
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        ResultTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn csv_sha256(&self) -> String {
        let digest = Sha256::digest(self.to_csv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sidecar document: columns, row count, metadata and the CSV digest.
    pub fn to_json(&self) -> String {
        let doc = serde_json::json!({
            "columns": self.columns,
            "rows": self.rows.len(),
            "csv_sha256": self.csv_sha256(),
            "metadata": self.metadata,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("metadata serializes");
        s.push('\n');
        s
    }
}

fn write_file(path: &Path, text: &str) -> io::Result<()> {
    fs::write(path, text).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes whichever outputs are given; errors name the failing path.
pub fn write_results(
    table: &ResultTable,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> io::Result<()> {
    if let Some(p) = csv {
        write_file(p, &table.to_csv())?;
    }
    if let Some(p) = json {
        write_file(p, &table.to_json())?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn parse_csv(text: &str) -> Result<ResultTable, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(CsvError::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let columns: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| {
                c.parse::<f64>().map_err(|e| CsvError::Parse {
                    line: k + 2,
                    message: format!("{c:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != columns.len() {
            return Err(CsvError::Parse {
                line: k + 2,
                message: format!("{} cells, header has {}", row.len(), columns.len()),
            });
        }
        rows.push(row);
    }
    Ok(ResultTable {
        columns,
        rows,
        metadata: BTreeMap::new(),
    })
}

pub fn read_csv(path: &Path) -> Result<ResultTable, CsvError> {
    parse_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text() {
        assert_eq!(format_float(0.25), "0.25");
        assert_eq!(format_float(3.0), "3");
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(format_float(-0.0), "-0");
        assert_eq!(format_float(1e-7), "1e-7");
        for v in [
            0.1,
            1.0 / 3.0,
            -2.5e300,
            5e-324,
            1e15,
            -0.0,
            f64::NEG_INFINITY,
        ] {
            let back: f64 = format_float(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn csv_shape() {
        let mut t = ResultTable::new(&["n", "gap"]);
        t.push(vec![1.0, 0.5]);
        t.push(vec![f64::INFINITY, 0.0]);
        assert_eq!(t.to_csv(), "n,gap\n1,0.5\ninf,0\n");
        assert_eq!(parse_csv(&t.to_csv()).unwrap().rows, t.rows);
        assert!(parse_csv("a,b\n1\n").is_err());
    }
}
