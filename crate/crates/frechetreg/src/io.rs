//! CSV matrix I/O for the batch CLI. Values are serialized with 17
//! significant digits so write-then-read is bitwise exact for binary64.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Read a matrix from CSV with a header row. Errors name the offending line
/// (1-based, counting the header).
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "no data rows".into(),
            })
        }
    };
    let ncols = header.split(',').count();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != ncols {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {ncols} columns, found {}", cells.len()),
            });
        }
        let mut row = Vec::with_capacity(ncols);
        for cell in cells {
            let v: f64 = parse_float(cell.trim()).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let nrows = rows.len();
    let mut out = Array2::<f64>::zeros((nrows, ncols));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

fn parse_float(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// Write a matrix as CSV with column names `prefix1..prefixN`.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>, prefix: &str) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (1..=matrix.ncols())
        .map(|j| format!("{prefix}{j}"))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for row in matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits: enough for an exact binary64 round trip.
pub fn format_float(v: f64) -> String {
    if v == v.floor() && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:.16e}")
    }
}
