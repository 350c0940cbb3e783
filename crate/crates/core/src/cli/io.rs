//! Delimited numeric text: one observation per line, cells separated by
//! commas or whitespace. Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::Sample;

fn parse_error(path: &str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), line, column, message: message.into() }
}

/// Split a line into `(1-based column, cell)` pairs.
fn cells(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    if line.contains(',') {
        let mut start = 0;
        for part in line.split(',') {
            let lead = part.len() - part.trim_start().len();
            out.push((line[..start + lead].chars().count() + 1, part.trim()));
            start += part.len() + 1;
        }
    } else {
        let mut offset = 0;
        for part in line.split_whitespace() {
            let at = offset + line[offset..].find(part).expect("part comes from line");
            out.push((line[..at].chars().count() + 1, part));
            offset = at + part.len();
        }
    }
    out
}

/// Parse a numeric matrix from text; `path` is used in diagnostics only.
pub fn parse_matrix(text: &str, path: &str) -> Result<Sample> {
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let row = cells(line);
        for &(col, cell) in &row {
            if cell.is_empty() {
                return Err(parse_error(path, line_no, col, "empty cell"));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, line_no, col, format!("not a number: `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_error(path, line_no, col, format!("non-finite value `{cell}`")));
            }
            data.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                let col = row.get(w).map_or(line.chars().count() + 1, |c| c.0);
                return Err(parse_error(
                    path,
                    line_no,
                    col,
                    format!("expected {w} fields, found {}", row.len()),
                ));
            }
            _ => {}
        }
        rows += 1;
    }
    let d = width.ok_or_else(|| parse_error(path, 1, 1, "no data rows"))?;
    if rows < 2 {
        return Err(parse_error(path, 1, 1, format!("need at least 2 rows, found {rows}")));
    }
    Sample::new(data, rows, d)
}

pub fn read_matrix(path: &Path) -> Result<Sample> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text, &path.display().to_string())
}

/// Comma-separated rows with shortest round-trip formatting.
pub fn format_matrix(s: &Sample) -> String {
    let mut out = String::with_capacity(s.n() * s.d() * 20);
    for row in s.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to String");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commas_and_whitespace() {
        let a = parse_matrix("1,2,3\n4, 5 ,6\n", "a").unwrap();
        let b = parse_matrix("# comment\n1 2\t3\n\n4 5 6\n", "b").unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.d()), (2, 3));
    }

    #[test]
    fn diagnostics() {
        let msg = |t: &str| parse_matrix(t, "f.txt").unwrap_err().to_string();
        assert_eq!(msg("1,2\n3,x\n"), "f.txt:2:3: not a number: `x`");
        assert_eq!(msg("1 2\n3 4 5\n"), "f.txt:2:5: expected 2 fields, found 3");
        assert_eq!(msg("1,2\n3\n"), "f.txt:2:2: expected 2 fields, found 1");
        assert_eq!(msg("1,,2\n3,4,5\n"), "f.txt:1:3: empty cell");
        assert_eq!(msg("1 2\n"), "f.txt:1:1: need at least 2 rows, found 1");
        assert_eq!(msg("1 inf\n2 3\n"), "f.txt:1:3: non-finite value `inf`");
        assert!(msg("").contains("no data rows"));
    }

    #[test]
    fn round_trip() {
        let s = Sample::from_rows(&[vec![0.1, -2.5e-9], vec![3.0, 1.0 / 3.0]]).unwrap();
        assert_eq!(parse_matrix(&format_matrix(&s), "x").unwrap(), s);
    }
}
