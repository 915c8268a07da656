//! Plain-text matrix files: a `rows cols` line followed by the entries in
//! row-major order, separated by any whitespace. Lines starting with `#` are
//! ignored.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{LinselError, Result};

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> LinselError {
    LinselError::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses matrix text; `origin` names the source in error messages.
pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (head_line, head) = lines
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty file, expected a `rows cols` header"))?;
    let dims: Vec<&str> = head.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(origin, head_line, "header must be `rows cols`"));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(origin, head_line, format!("bad dimension `{s}`")))
    };
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let expected = rows * cols;
    let mut data = Vec::with_capacity(expected);
    let mut last_line = head_line;
    for (ln, line) in lines {
        last_line = ln;
        for tok in line.split_whitespace() {
            if data.len() == expected {
                return Err(parse_err(
                    origin,
                    ln,
                    format!("more than the {expected} entries declared by the header"),
                ));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(origin, ln, format!("cannot parse `{tok}` as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(origin, ln, format!("non-finite entry `{tok}`")));
            }
            data.push(v);
        }
    }
    if data.len() != expected {
        return Err(parse_err(
            origin,
            last_line,
            format!("found {} entries, header declares {rows}x{cols} = {expected}", data.len()),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| LinselError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_matrix(&text, &path.display().to_string())
}

/// Reads a vector stored as a single column or a single row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(parse_err(
            &path.display().to_string(),
            1,
            format!("expected a vector, got a {}x{} matrix", m.nrows(), m.ncols()),
        ))
    }
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let entries: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&entries.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| LinselError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Writes a vector as an `n 1` column.
pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}
