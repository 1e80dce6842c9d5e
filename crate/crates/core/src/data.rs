//! CSV ingestion of a response, design columns and optional covariates.
//!
//! Files are UTF-8, comma separated, with a mandatory header row. Numbers
//! use a dot decimal separator regardless of locale.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    pub y: Vec<f64>,
    /// `n` rows of `p` design values.
    pub x: Vec<Vec<f64>>,
    /// `n` rows of `q` covariate values.
    pub w: Option<Vec<Vec<f64>>>,
    /// Response name, then design names, then covariate names.
    pub column_names: Vec<String>,
}

impl DataTable {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }

    pub fn q(&self) -> usize {
        self.w.as_ref().and_then(|w| w.first()).map_or(0, |r| r.len())
    }

    /// Writes the table with its own column names; reading it back with the
    /// same names reproduces it exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record(&self.column_names).map_err(io)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].to_string()];
            rec.extend(self.x[i].iter().map(|v| v.to_string()));
            if let Some(w) = &self.w {
                rec.extend(w[i].iter().map(|v| v.to_string()));
            }
            wtr.write_record(&rec).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads `path`, selecting the response, design and covariate columns by
/// header name.
pub fn parse_csv(path: impl AsRef<Path>, y_col: &str, x_cols: &[&str], w_cols: Option<&[&str]>) -> Result<DataTable> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, y_col, x_cols, w_cols)
}

/// As [`parse_csv`], from any reader.
pub fn read_csv<R: Read>(input: R, y_col: &str, x_cols: &[&str], w_cols: Option<&[&str]>) -> Result<DataTable> {
    if x_cols.is_empty() {
        return Err(Error::Schema("at least one design column is required".into()));
    }
    if w_cols.is_some_and(|w| w.is_empty()) {
        return Err(Error::Schema("covariate list is empty".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header {:?}", headers.iter().collect::<Vec<_>>())))
    };
    let y_idx = find(y_col)?;
    let x_idx: Vec<usize> = x_cols.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let w_idx: Option<Vec<usize>> = w_cols.map(|w| w.iter().map(|c| find(c)).collect::<Result<_>>()).transpose()?;

    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut w = w_idx.as_ref().map(|_| Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        // Header is line 1, so data record k sits on line k + 2.
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { row: line, column: String::new(), msg: e.to_string() })?;
        let cell = |idx: usize| -> Result<f64> {
            let column = headers.get(idx).unwrap_or_default().to_string();
            let raw = rec.get(idx).ok_or_else(|| Error::Parse { row: line, column: column.clone(), msg: "missing cell".into() })?;
            if raw.is_empty() {
                return Err(Error::Parse { row: line, column, msg: "empty cell".into() });
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Parse { row: line, column: column.clone(), msg: format!("'{raw}' is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { row: line, column, msg: format!("'{raw}' is not finite") });
            }
            Ok(v)
        };
        y.push(cell(y_idx)?);
        x.push(x_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        if let (Some(wi), Some(wv)) = (&w_idx, &mut w) {
            wv.push(wi.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        }
    }
    let n = y.len();
    if n <= x_cols.len() {
        return Err(Error::InsufficientData(format!("n = {n} rows must exceed p = {}", x_cols.len())));
    }
    let mut column_names = vec![y_col.to_string()];
    column_names.extend(x_cols.iter().map(|s| s.to_string()));
    if let Some(wc) = w_cols {
        column_names.extend(wc.iter().map(|s| s.to_string()));
    }
    Ok(DataTable { y, x, w, column_names })
}
