//! Dense matrix text format: a `rows cols` line followed by the entries in
//! row-major order, separated by any whitespace.

use std::fmt::Write as _;
use std::path::Path;

use spi_core::Matrix;

use crate::error::CliError;

pub fn parse_matrix(text: &str) -> Result<Matrix, String> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize, String> {
        tokens
            .next()
            .ok_or_else(|| format!("missing {what} count"))?
            .parse::<usize>()
            .map_err(|_| format!("invalid {what} count"))
    };
    let (rows, cols) = (dim("row")?, dim("column")?);
    let values = tokens
        .map(|t| t.parse::<f64>().map_err(|_| format!("invalid entry {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != rows * cols {
        return Err(format!("expected {} entries, found {}", rows * cols, values.len()));
    }
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

pub fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read matrix {}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| m[(i, j)])
            .map(|v| if v == 0.0 { "0".to_string() } else { format!("{v}") })
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), CliError> {
    std::fs::write(path, format_matrix(m)).map_err(|e| CliError::io(path, e))
}
