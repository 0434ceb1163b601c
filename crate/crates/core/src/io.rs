//! Plain-text matrix and DAG files.
//!
//! A matrix file starts with a `rows cols` header line followed by one line
//! per row. Values are separated by whitespace or commas, and lines starting
//! with `#` are ignored. Values are written in shortest round-trip form, so
//! reading a written matrix gives back the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::{Matrix, SymMatrix};

/// Relative asymmetry accepted when loading a symmetric matrix.
pub const SYMMETRY_TOL: f64 = 1e-9;

pub fn matrix_to_text(m: &Matrix) -> String {
    let mut s = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (ln, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty matrix file".into(),
    })?;
    let dims: Vec<usize> = tokens(header)
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: ln + 1,
            msg: format!("expected \"rows cols\", found {header:?}"),
        })?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse {
            line: ln + 1,
            msg: format!("expected \"rows cols\", found {header:?}"),
        });
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (ln, line) in lines {
        seen += 1;
        if seen > rows {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("more than {rows} data rows"),
            });
        }
        let before = data.len();
        for t in tokens(line) {
            let v: f64 = t.parse().map_err(|_| Error::Parse {
                line: ln + 1,
                msg: format!("bad number {t:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: format!("non-finite value {t:?}"),
                });
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("expected {cols} values, found {}", data.len() - before),
            });
        }
    }
    if seen != rows {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {rows} data rows, found {seen}"),
        });
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn parse_symmetric(text: &str) -> Result<SymMatrix> {
    SymMatrix::new(parse_matrix(text)?, SYMMETRY_TOL)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    }
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&read_text(path)?).map_err(|e| in_file(path, e))
}

pub fn read_symmetric(path: &Path) -> Result<SymMatrix> {
    parse_symmetric(&read_text(path)?).map_err(|e| in_file(path, e))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, matrix_to_text(m))?;
    Ok(())
}

pub fn read_dag(path: &Path) -> Result<Dag> {
    Dag::parse_text(&read_text(path)?).map_err(|e| in_file(path, e))
}

pub fn write_dag(path: &Path, dag: &Dag) -> Result<()> {
    fs::write(path, dag.to_text())?;
    Ok(())
}
