//! LIBSVM text format: `label idx:val idx:val ...` with 1-based indices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_label(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("non-numeric label {tok:?}")))?;
    match v {
        1.0 => Ok(1.0),
        -1.0 | 0.0 => Ok(-1.0),
        _ => Err(parse_err(line, format!("label {tok:?} is not one of -1, 0, +1"))),
    }
}

/// Parses LIBSVM text into a dense `n x d` matrix (`d` = largest index seen)
/// and labels in {-1, +1}. Blank lines and `#` comments are skipped.
pub fn parse_libsvm(text: &str) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut rows: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0usize;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let label = parse_label(toks.next().expect("non-empty line"), line)?;
        let mut row = BTreeMap::new();
        for tok in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize =
                idx.parse().map_err(|_| parse_err(line, format!("non-numeric feature index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_err(line, "feature indices are 1-based"));
            }
            let val: f64 = val.parse().map_err(|_| parse_err(line, format!("non-numeric value {val:?}")))?;
            if !val.is_finite() {
                return Err(parse_err(line, format!("non-finite value {val}")));
            }
            if row.insert(idx, val).is_some() {
                return Err(parse_err(line, format!("duplicate feature index {idx}")));
            }
            d = d.max(idx);
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows"));
    }
    let mut w = DMatrix::zeros(rows.len(), d.max(1));
    for (i, row) in rows.iter().enumerate() {
        for (&j, &v) in row {
            w[(i, j - 1)] = v;
        }
    }
    Ok((w, labels))
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    parse_libsvm(&std::fs::read_to_string(path)?)
}

/// Serializes nonzero entries; values use shortest round-trip formatting.
pub fn format_libsvm(w: &DMatrix<f64>, y: &[f64]) -> Result<String> {
    if w.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: w.nrows(), got: y.len() });
    }
    let mut out = String::new();
    for (i, &label) in y.iter().enumerate() {
        out.push_str(if label > 0.0 { "+1" } else { "-1" });
        for j in 0..w.ncols() {
            let v = w[(i, j)];
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).expect("write to string");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_libsvm(path: impl AsRef<Path>, w: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    std::fs::write(path, format_libsvm(w, y)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sparse_row() {
        let (w, y) = parse_libsvm("+1 1:0.5 3:2.0\n").unwrap();
        assert_eq!(w, DMatrix::from_row_slice(1, 3, &[0.5, 0.0, 2.0]));
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn maps_zero_labels() {
        let (_, y) = parse_libsvm("0 1:1\n1 2:1\n# comment\n\n-1 1:3").unwrap();
        assert_eq!(y, vec![-1.0, 1.0, -1.0]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_libsvm("").is_err());
        assert!(parse_libsvm("\n# only comments\n").is_err());
        let e = parse_libsvm("+1 1:0.5\n-1 2:x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(matches!(parse_libsvm("+1 1:1 1:2").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(parse_libsvm("+1 0:1").is_err());
        assert!(parse_libsvm("2 1:1").is_err());
        assert!(parse_libsvm("+1 1").is_err());
    }

    #[test]
    fn round_trip_file() {
        let w = DMatrix::from_row_slice(3, 4, &[0.1, 0.0, -3.25, 1e-17, 0.0, 0.0, 0.0, 7.0, 1.0 / 3.0, 2.0, 0.0, 0.0]);
        let y = vec![1.0, -1.0, 1.0];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.svm");
        write_libsvm(&path, &w, &y).unwrap();
        let (w2, y2) = load_libsvm(&path).unwrap();
        assert_eq!(w2, w);
        assert_eq!(y2, y);
        assert!(load_libsvm(dir.path().join("missing")).is_err());
    }
}
