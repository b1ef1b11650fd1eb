//! Plain-text matrix format: a `"<rows> <cols>"` header line followed by one
//! line per row of space-separated values. Values use Rust's shortest
//! round-trip formatting, so parsing gives back the exact bits.

use std::fmt::Write as _;

use super::Matrix;
use crate::error::{Error, Result};

impl Matrix {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out);
        out
    }

    pub fn write_text(&self, out: &mut String) {
        let _ = writeln!(out, "{} {}", self.rows(), self.cols());
        for i in 0..self.rows() {
            let mut first = true;
            for x in self.row(i) {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{x:?}");
            }
            out.push('\n');
        }
    }

    pub fn from_text(text: &str) -> Result<Matrix> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let m = Matrix::read_text(&mut lines)?;
        if let Some((line, rest)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::Checkpoint {
                line,
                reason: format!("trailing content after matrix: {rest:?}"),
            });
        }
        Ok(m)
    }

    /// Reads one matrix from a stream of `(line_number, line)` pairs,
    /// consuming exactly the header and `rows` data lines.
    pub fn read_text<'a, I>(lines: &mut I) -> Result<Matrix>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (hline, header) = lines.next().ok_or(Error::Checkpoint {
            line: 0,
            reason: "missing matrix header".into(),
        })?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Checkpoint {
                line: hline,
                reason: format!("bad matrix dimension {s:?}"),
            })
        };
        if dims.len() != 2 {
            return Err(Error::Checkpoint {
                line: hline,
                reason: format!("expected \"<rows> <cols>\", found {header:?}"),
            });
        }
        let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (lno, line) = lines.next().ok_or(Error::Checkpoint {
                line: hline + r + 1,
                reason: format!("truncated matrix: expected {rows} rows, found {r}"),
            })?;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Checkpoint {
                    line: lno,
                    reason: format!("bad number {tok:?}"),
                })?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(Error::dim(
                    "matrix text row",
                    format!("{cols} values on line {lno}"),
                    data.len() - before,
                ));
            }
        }
        Matrix::from_vec(rows, cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::{random_matrix, RngStream};

    #[test]
    fn layout() {
        let m = Matrix::from_rows(&[&[1.0, -0.5], &[1e-20, 3.25]]);
        assert_eq!(m.to_text(), "2 2\n1.0 -0.5\n1e-20 3.25\n");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = random_matrix(&mut RngStream::new(3), 5, 4, 1.0).scale(1.0 / 3.0);
        let back = Matrix::from_text(&m.to_text()).unwrap();
        assert!(m
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn short_row_is_a_dimension_error() {
        let err = Matrix::from_text("2 2\n1 2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        assert!(Matrix::from_text("3 1\n1\n2\n").is_err());
    }
}
