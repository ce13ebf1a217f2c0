//! Labeled numeric tables: a header line of labels followed by rows of
//! comma-separated decimals. Used for returns, covariance matrices, and
//! expected-return vectors.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Shortest decimal that parses back to the identical `f64`.
///
/// Plain notation for moderate magnitudes, scientific otherwise, so tiny and
/// huge values stay compact.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Reads a header of labels and the numeric rows below it.
///
/// Returns the labels and a `rows × labels.len()` matrix. Every row must have
/// exactly one field per label and every field must be a finite decimal.
pub fn read_labeled_rows<R: Read>(source: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut records = reader.records();
    let header = match records.next() {
        None => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "empty file: missing header".into(),
            })
        }
        Some(rec) => rec.map_err(|e| csv_error(e, 1))?,
    };
    let labels: Vec<String> = header.iter().map(str::to_owned).collect();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "header has no labels".into(),
        });
    }
    if let Some(pos) = labels.iter().position(String::is_empty) {
        return Err(Error::Parse {
            row: 1,
            column: pos + 1,
            message: "empty label".into(),
        });
    }

    let width = labels.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, rec) in records.enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| csv_error(e, row))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            data.push(parse_field(field, row, c + 1)?);
        }
        rows += 1;
    }
    Ok((labels, DMatrix::from_row_slice(rows, width, &data)))
}

fn parse_field(field: &str, row: usize, column: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::Parse {
            row,
            column,
            message: format!("non-finite value {field:?}"),
        }),
        Err(_) => Err(Error::Parse {
            row,
            column,
            message: format!("not a number: {field:?}"),
        }),
    }
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    Error::Parse {
        row,
        column: 1,
        message: e.to_string(),
    }
}

/// Writes `labels` as a header and each matrix row as a line.
pub fn write_labeled_rows<W: Write>(
    mut sink: W,
    labels: &[String],
    rows: &DMatrix<f64>,
) -> Result<()> {
    if labels.len() != rows.ncols() {
        return Err(Error::Dimension(format!(
            "{} labels for {} columns",
            labels.len(),
            rows.ncols()
        )));
    }
    writeln!(sink, "{}", labels.join(","))?;
    for i in 0..rows.nrows() {
        let line: Vec<String> = rows.row(i).iter().map(|&x| fmt_f64(x)).collect();
        writeln!(sink, "{}", line.join(","))?;
    }
    Ok(())
}

/// Default labels `A1..An`.
pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i}")).collect()
}
