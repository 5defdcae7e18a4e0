//! CSV in and out.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Result, SdrError};

/// Cell contents treated as missing.
pub const NA_TOKENS: &[&str] = &["", "NA", "N/A", "NaN", "nan", "null", "NULL"];

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped: usize,
    pub response: Vec<String>,
    pub predictors: Vec<String>,
}

/// Which columns form `Y`: names, or 1-based indices, comma separated.
/// Defaults to the last column.
pub fn resolve_response(header: &[String], spec: Option<&str>) -> Result<Vec<usize>> {
    let Some(spec) = spec else {
        return match header.len() {
            0 => Err(SdrError::InvalidData("input has no columns".into())),
            n => Ok(vec![n - 1]),
        };
    };
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let idx = match header.iter().position(|h| h == tok) {
            Some(i) => i,
            None => match tok.parse::<usize>() {
                Ok(i) if i >= 1 && i <= header.len() => i - 1,
                _ => {
                    return Err(SdrError::InvalidConfig(format!("response column '{tok}' not found in header")));
                }
            },
        };
        if !out.contains(&idx) {
            out.push(idx);
        }
    }
    if out.is_empty() {
        return Err(SdrError::InvalidConfig("empty response specification".into()));
    }
    if out.len() == header.len() {
        return Err(SdrError::InvalidConfig("every column is a response; no predictors left".into()));
    }
    Ok(out)
}

pub fn ingest_reader<R: Read>(reader: R, delimiter: u8, response: Option<&str>) -> Result<(Dataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    let ycols = resolve_response(&header, response)?;
    let xcols: Vec<usize> = (0..header.len()).filter(|j| !ycols.contains(j)).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut read = 0;
    let mut dropped = 0;
    for (i, rec) in rdr.records().enumerate() {
        // data rows are numbered from 1; the header is row 0
        let row = i + 1;
        let rec = rec.map_err(|e| csv_error(e, row))?;
        read += 1;
        let mut vals = Vec::with_capacity(rec.len());
        let mut missing = false;
        for (j, cell) in rec.iter().enumerate() {
            if NA_TOKENS.contains(&cell) {
                missing = true;
                vals.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| SdrError::Parse {
                row,
                column: j + 1,
                message: format!("'{cell}' in column '{}' is not a number", header[j]),
            })?;
            if !v.is_finite() {
                return Err(SdrError::Parse {
                    row,
                    column: j + 1,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            vals.push(v);
        }
        if missing {
            dropped += 1;
        } else {
            rows.push(vals);
        }
    }
    if rows.is_empty() {
        return Err(SdrError::EmptyAfterNaDrop);
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, xcols.len(), |i, j| rows[i][xcols[j]]);
    let y = DMatrix::from_fn(n, ycols.len(), |i, j| rows[i][ycols[j]]);
    let x_names: Vec<String> = xcols.iter().map(|&j| header[j].clone()).collect();
    let y_names: Vec<String> = ycols.iter().map(|&j| header[j].clone()).collect();
    let data = Dataset::with_names(x, y, x_names.clone(), y_names.clone())?;
    Ok((
        data,
        IngestReport {
            rows_read: read,
            dropped,
            response: y_names,
            predictors: x_names,
        },
    ))
}

pub fn ingest(path: &Path, delimiter: u8, response: Option<&str>) -> Result<(Dataset, IngestReport)> {
    let file = std::fs::File::open(path)
        .map_err(|e| SdrError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    ingest_reader(std::io::BufReader::new(file), delimiter, response)
}

fn csv_error(e: csv::Error, row: usize) -> SdrError {
    match e.kind() {
        csv::ErrorKind::Io(_) => SdrError::Io(std::io::Error::other(e.to_string())),
        csv::ErrorKind::UnequalLengths { len, .. } => SdrError::Parse {
            row,
            column: *len as usize,
            message: e.to_string(),
        },
        _ => SdrError::Parse {
            row,
            column: 0,
            message: e.to_string(),
        },
    }
}

/// Predictors then responses, full round-trip precision.
pub fn write_dataset<W: Write>(w: W, data: &Dataset, delimiter: u8) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
    let header: Vec<&str> = data.x_names.iter().chain(&data.y_names).map(String::as_str).collect();
    wtr.write_record(&header).map_err(io_err)?;
    for i in 0..data.n() {
        let rec: Vec<String> = data
            .x
            .row(i)
            .iter()
            .chain(data.y.row(i).iter())
            .map(|v| format!("{v:?}"))
            .collect();
        wtr.write_record(&rec).map_err(io_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Matrix as CSV with the given column names.
pub fn matrix_csv(m: &DMatrix<f64>, names: &[String]) -> String {
    let mut out = names.join(",");
    out.push('\n');
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn io_err(e: csv::Error) -> SdrError {
    SdrError::Io(std::io::Error::other(e.to_string()))
}
