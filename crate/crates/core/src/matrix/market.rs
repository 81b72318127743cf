//! Matrix Market coordinate-format reader and writer.
//!
//! Only `matrix coordinate real|integer general|symmetric` is accepted;
//! symmetric storage is expanded on read so downstream kernels see a full
//! matrix.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

pub fn read_matrix_market<T: Scalar>(path: impl AsRef<Path>) -> Result<CsrMatrix<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_market(BufReader::new(file))
}

pub fn parse_matrix_market<T: Scalar, R: Read>(reader: BufReader<R>) -> Result<CsrMatrix<T>> {
    let perr = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let header = header.map_err(|e| perr(1, &e.to_string()))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(perr(1, "missing '%%MatrixMarket matrix' header"));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::Unsupported(format!("format '{}' (only coordinate)", tokens[2])));
    }
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::Unsupported(format!("field '{other}' (only real)"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::Unsupported(format!("symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut declared = 0usize;
    let mut triplets: Vec<(usize, usize, T)> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| perr(lineno, &e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(perr(lineno, "size line must be 'rows cols nnz'"));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|_| perr(lineno, "bad size field"));
                let (rows, cols) = (parse(fields[0])?, parse(fields[1])?);
                declared = parse(fields[2])?;
                if rows != cols {
                    return Err(Error::Unsupported(format!("non-square matrix {rows}x{cols}")));
                }
                if rows == 0 {
                    return Err(perr(lineno, "matrix order must be positive"));
                }
                size = Some((rows, cols));
                triplets.reserve(declared * if symmetry == Symmetry::Symmetric { 2 } else { 1 });
            }
            Some((n, _)) => {
                if fields.len() != 3 {
                    return Err(perr(lineno, "entry line must be 'row col value'"));
                }
                let r: usize = fields[0].parse().map_err(|_| perr(lineno, "bad row index"))?;
                let c: usize = fields[1].parse().map_err(|_| perr(lineno, "bad column index"))?;
                if r == 0 || c == 0 || r > n || c > n {
                    return Err(perr(lineno, &format!("index ({r}, {c}) outside 1..={n}")));
                }
                let v: f64 = fields[2].parse().map_err(|_| perr(lineno, "bad value"))?;
                if !v.is_finite() {
                    return Err(perr(lineno, "non-finite value"));
                }
                let v = T::of(v);
                let (r, c) = (r - 1, c - 1);
                triplets.push((r, c, v));
                if symmetry == Symmetry::Symmetric && r != c {
                    triplets.push((c, r, v));
                }
            }
        }
    }
    let (n, _) = size.ok_or_else(|| perr(0, "missing size line"))?;
    let stored = triplets
        .iter()
        .filter(|(r, c, _)| symmetry == Symmetry::General || r >= c)
        .count();
    if stored != declared {
        return Err(perr(0, &format!("expected {declared} entries, found {stored}")));
    }
    CsrMatrix::from_triplets(n, &triplets)
}

/// Writes `a` as a `general` coordinate file. Values are printed in shortest
/// round-trip form so a read-back reproduces them bit for bit.
pub fn write_matrix_market<T: Scalar>(a: &CsrMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_to(a, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn write_to<T: Scalar, W: Write>(a: &CsrMatrix<T>, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.order(), a.order(), a.nnz())?;
    for i in 0..a.order() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v.as_f64())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<CsrMatrix<f64>> {
        parse_matrix_market(BufReader::new(text.as_bytes()))
    }

    #[test]
    fn identity() {
        let a =
            parse("%%MatrixMarket matrix coordinate real general\n% comment\n3 3 3\n1 1 1\n2 2 1\n3 3 1.0\n").unwrap();
        assert_eq!(a.order(), 3);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a, CsrMatrix::<f64>::identity(3));
    }

    #[test]
    fn symmetric_expansion() {
        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 4\n2 1 5\n2 2 4\n").unwrap();
        assert_eq!(a.get(0, 1), 5.0);
        assert_eq!(a.get(1, 0), 5.0);
        assert_eq!(a.nnz(), 4);
    }

    #[test]
    fn zero_index_rejected() {
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn complex_and_rectangular_rejected() {
        let err = parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 3 0\n").unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn entry_count_checked() {
        assert!(parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n").is_err());
    }

    #[test]
    fn missing_file() {
        let err = read_matrix_market::<f64>("/nonexistent/missing.mtx").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
