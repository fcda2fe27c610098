//! CSV emission with a fixed numeric format.
//!
//! Every file starts with a single `#` comment line carrying a timestamp; the
//! remaining body is deterministic. Floats are written in scientific notation
//! with 17 significant digits so that values round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numeric(&mut self, row: &[f64]) {
        self.rows.push(row.iter().copied().map(fmt_f64).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Body without the comment line.
    pub fn body(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(io_err)?;
        for r in &self.rows {
            if r.len() != self.header.len() {
                return Err(Error::Input(format!(
                    "CSV row has {} fields, header has {}",
                    r.len(),
                    self.header.len()
                )));
            }
            w.write_record(r).map_err(io_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Numeric(format!("csv: {e}")))
    }

    /// Writes `# generated <unix seconds>` followed by the body.
    pub fn write(&self, path: &Path) -> Result<()> {
        let body = self.body()?;
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let file = File::create(path)
            .map_err(|e| Error::Input(format!("cannot create {}: {e}", path.display())))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# generated {stamp}")
            .and_then(|_| out.write_all(body.as_bytes()))
            .and_then(|_| out.flush())
            .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Input(format!("csv: {e}"))
}

/// Strips leading `#` lines.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .skip_while(|l| l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Parses a CSV body (comment lines skipped) into a header and numeric rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let body = csv_body(&text);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r
        .headers()
        .map_err(io_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io_err)?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Input(format!("bad number {f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
