//! Plain-text fixture formats.
//!
//! Matrix files (lattice functions, kernels, generators):
//!
//! ```text
//! # comments and blank lines are ignored
//! omega_weights 1 1 1
//! sigma_weights 0.5 0.5
//! 1.0  -2.0
//! 0.0   3.5
//! 4.0   1e-3
//! ```
//!
//! Values are row-major, one Ω-atom per line, whitespace or comma
//! separated. For kernels and generators the matrix is square over Ω and
//! the `sigma_weights` line may be omitted (if present it must equal
//! `omega_weights`).
//!
//! Weight files (a positive weight on a segment of ℤ):
//!
//! ```text
//! offset -3
//! 1.0
//! 1.0
//! 2.0
//! ```

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Result, VarlabError};
use crate::lattice::{LatticeFunction, MeasureSpace};

/// Contents of a matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub omega: MeasureSpace,
    pub sigma: Option<MeasureSpace>,
    pub values: DMatrix<f64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> VarlabError {
    VarlabError::Parse {
        line,
        message: message.into(),
    }
}

fn numbers(line_no: usize, text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("`{tok}` is not a number")))
        })
        .collect()
}

fn meaningful_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

impl MatrixFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut omega = None;
        let mut sigma = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut first_row_line = 0;
        for (line_no, line) in meaningful_lines(text) {
            if let Some(rest) = line.strip_prefix("omega_weights") {
                let w = numbers(line_no, rest)?;
                omega = Some(
                    MeasureSpace::from_weights(w)
                        .map_err(|e| parse_err(line_no, format!("omega_weights: {e}")))?,
                );
            } else if let Some(rest) = line.strip_prefix("sigma_weights") {
                let w = numbers(line_no, rest)?;
                sigma = Some(
                    MeasureSpace::from_weights(w)
                        .map_err(|e| parse_err(line_no, format!("sigma_weights: {e}")))?,
                );
            } else {
                if omega.is_none() {
                    return Err(parse_err(line_no, "values before the omega_weights header"));
                }
                if rows.is_empty() {
                    first_row_line = line_no;
                }
                let row = numbers(line_no, line)?;
                if let Some(prev) = rows.first() {
                    if prev.len() != row.len() {
                        return Err(parse_err(
                            line_no,
                            format!("row has {} values, expected {}", row.len(), prev.len()),
                        ));
                    }
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(parse_err(line_no, "entries must be finite"));
                }
                rows.push(row);
            }
        }
        let omega = omega.ok_or_else(|| parse_err(1, "missing omega_weights header"))?;
        if rows.len() != omega.len() {
            return Err(parse_err(
                first_row_line.max(1),
                format!("{} value rows for {} omega atoms", rows.len(), omega.len()),
            ));
        }
        let ncols = rows[0].len();
        if let Some(s) = &sigma {
            if s.len() != ncols {
                return Err(parse_err(
                    first_row_line,
                    format!("{ncols} columns for {} sigma atoms", s.len()),
                ));
            }
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(MatrixFile {
            omega,
            sigma,
            values: DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat),
        })
    }

    pub fn into_lattice_function(self) -> Result<LatticeFunction> {
        let sigma = self
            .sigma
            .ok_or_else(|| parse_err(1, "lattice functions need a sigma_weights header"))?;
        LatticeFunction::new(self.omega, sigma, self.values)
    }

    /// Square matrix over Ω with its measure.
    pub fn into_square(self) -> Result<(MeasureSpace, DMatrix<f64>)> {
        if self.values.ncols() != self.omega.len() {
            return Err(parse_err(1, "kernel matrix must be square over omega"));
        }
        if let Some(s) = &self.sigma {
            if s != &self.omega {
                return Err(parse_err(1, "kernel sigma_weights must equal omega_weights"));
            }
        }
        Ok((self.omega, self.values))
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes a lattice function in the matrix format. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_lattice_function(f: &LatticeFunction) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "omega_weights {}", join(f.omega().weights().iter().copied()));
    let _ = writeln!(out, "sigma_weights {}", join(f.sigma().weights().iter().copied()));
    for row in f.values().row_iter() {
        let _ = writeln!(out, "{}", join(row.iter().copied()));
    }
    out
}

/// Writes a square kernel or generator matrix.
pub fn write_square(space: &MeasureSpace, m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "omega_weights {}", join(space.weights().iter().copied()));
    for row in m.row_iter() {
        let _ = writeln!(out, "{}", join(row.iter().copied()));
    }
    out
}

/// Positive weight values on the integer segment `offset .. offset + len`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub offset: i64,
    pub values: Vec<f64>,
}

impl WeightFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut offset = None;
        let mut values = Vec::new();
        for (line_no, line) in meaningful_lines(text) {
            if let Some(rest) = line.strip_prefix("offset") {
                let o = rest
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| parse_err(line_no, "offset must be an integer"))?;
                offset = Some(o);
            } else {
                if offset.is_none() {
                    return Err(parse_err(line_no, "weight values before the offset header"));
                }
                let v = line
                    .parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("`{line}` is not a number")))?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(parse_err(line_no, format!("weights must be positive, got {v}")));
                }
                values.push(v);
            }
        }
        let offset = offset.ok_or_else(|| parse_err(1, "missing offset header"))?;
        if values.is_empty() {
            return Err(parse_err(1, "weight file has no values"));
        }
        Ok(WeightFile { offset, values })
    }

    pub fn write(&self) -> String {
        let mut out = format!("offset {}\n", self.offset);
        for v in &self.values {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lattice_function() {
        let text = "# f\nomega_weights 1 2\nsigma_weights 0.5, 0.5 0.5\n1 2 3\n4 5 -6 # tail\n";
        let f = MatrixFile::parse(text).unwrap().into_lattice_function().unwrap();
        assert_eq!(f.values()[(1, 2)], -6.0);
        assert_eq!(f.omega().weights(), &[1.0, 2.0]);
        let again = MatrixFile::parse(&write_lattice_function(&f))
            .unwrap()
            .into_lattice_function()
            .unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn negative_weight_names_the_measure_invariant() {
        let err = MatrixFile::parse("omega_weights 1 -1\n1 0\n0 1\n").unwrap_err();
        match err {
            VarlabError::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("positive"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_rejected_with_line() {
        let err = MatrixFile::parse("omega_weights 1 1\n1 2\n3\n").unwrap_err();
        assert!(matches!(err, VarlabError::Parse { line: 3, .. }));
    }

    #[test]
    fn kernel_without_sigma_header() {
        let (space, k) = MatrixFile::parse("omega_weights 1 1\n0 1\n1 0\n")
            .unwrap()
            .into_square()
            .unwrap();
        assert_eq!(space.len(), 2);
        assert_eq!(k[(0, 1)], 1.0);
    }

    #[test]
    fn weight_file_round_trip() {
        let w = WeightFile::parse("offset -2\n1\n1\n2\n2.5\n").unwrap();
        assert_eq!(w.offset, -2);
        assert_eq!(WeightFile::parse(&w.write()).unwrap(), w);
        assert!(WeightFile::parse("offset 0\n1\n-1\n").is_err());
        assert!(WeightFile::parse("1\n").is_err());
    }
}
