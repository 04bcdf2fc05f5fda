//! Plain-text matrix format: an optional `# rows=<r> cols=<c>` header, then
//! one comma-separated row per line.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::Matrix;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v:.16e}")
}

pub fn write_matrix<W: Write>(mut w: W, m: &Matrix) -> Result<()> {
    writeln!(w, "# rows={} cols={}", m.rows(), m.cols())?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: R) -> Result<Matrix> {
    let mut declared: Option<(usize, usize)> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            if lineno == 0 {
                declared = Some(parse_header(header)?);
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}: {t:?}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = if rows.is_empty() {
        let (r, c) = declared.unwrap_or((0, 0));
        if r != 0 {
            return Err(Error::Parse(format!("header declares {r} rows but file has none")));
        }
        Matrix::zeros(0, c)
    } else {
        Matrix::from_rows(&rows)?
    };
    if let Some((r, c)) = declared {
        if (r, c) != m.shape() {
            return Err(Error::Parse(format!(
                "header declares {r}x{c} but data is {}x{}",
                m.rows(),
                m.cols()
            )));
        }
    }
    Ok(m)
}

fn parse_header(h: &str) -> Result<(usize, usize)> {
    let mut rows = None;
    let mut cols = None;
    for tok in h.split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = v.parse().ok();
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Parse(format!("malformed header {h:?}"))),
    }
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix(&mut buf, m)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    read_matrix(fs::File::open(path)?)
}
