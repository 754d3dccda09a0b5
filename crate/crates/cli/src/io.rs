//! Artifact formats.
//!
//! CSV: header row, LF line ends, `.` decimal point, floats in Rust's shortest
//! round-trip form. Binary trajectories ("GRTJ"): 4-byte magic, version byte 1,
//! three zero bytes, then little-endian u64 rows, u64 cols, f64 dt, f64 t0 and
//! rows·cols f64 values in row-major order.

use std::path::Path;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"GRTJ";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 40;

/// Shortest representation that parses back to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBlock {
    pub dt: f64,
    pub t0: f64,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryBlock {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let cols = self.rows.first().map_or(0, Vec::len);
        if self.rows.iter().any(|r| r.len() != cols) {
            return Err(CliError::Format("ragged trajectory rows".into()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * cols * self.rows.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[VERSION, 0, 0, 0]);
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&self.t0.to_le_bytes());
        for v in self.rows.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::Format(format!("trajectory file: {m}"));
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing GRTJ header"));
        }
        if bytes[4] != VERSION {
            return Err(bad(&format!("unsupported version {}", bytes[4])));
        }
        let u = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (rows, cols) = (u(8) as usize, u(16) as usize);
        let need = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != need {
            return Err(bad(&format!("expected {need} bytes, found {}", bytes.len())));
        }
        let data = (0..rows)
            .map(|r| (0..cols).map(|c| f(HEADER_LEN + 8 * (r * cols + c))).collect())
            .collect();
        Ok(Self {
            dt: f(24),
            t0: f(32),
            rows: data,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| CliError::io(path, e))?)
    }
}

/// Writes rows of already-formatted cells under `header`.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Header and numeric rows of a CSV file whose first column may be a label.
pub struct CsvTable {
    pub header: Vec<String>,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Parses a CSV; with `labelled`, the first column is kept as text.
pub fn read_csv(text: &str, labelled: bool) -> Result<CsvTable, CliError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| CliError::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Format(e.to_string()))?;
        let mut it = rec.iter();
        if labelled {
            labels.push(it.next().unwrap_or_default().to_string());
        }
        let row = it
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Format(format!("row {}: `{c}` is not a number", i + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        values.push(row);
    }
    Ok(CsvTable { header, labels, values })
}
