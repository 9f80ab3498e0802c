//! Headerless numeric CSV: one matrix row per line, comma separated.
//! LF and CRLF are accepted on input; output uses LF and 17 significant
//! digits so values survive a round trip bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{BmcError, Result};

pub fn parse_csv_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| BmcError::Parse {
            path: origin.to_string(),
            line: idx + 1,
            msg,
        };
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("not a number: {:?}", tok.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(format!(
                    "expected {} fields, found {}",
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn load_csv_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| BmcError::io(path, e))?;
    parse_csv_matrix(&text, &path.display().to_string())
}

pub fn format_csv_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn save_csv_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_csv_matrix(m)).map_err(|e| BmcError::io(path, e))
}

/// One integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| BmcError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<i64>().map_err(|_| BmcError::Parse {
                path: origin.clone(),
                line: i + 1,
                msg: format!("not an integer label: {:?}", l.trim()),
            })
        })
        .collect()
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).map_err(|e| BmcError::io(path, e))
}
