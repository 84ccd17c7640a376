//! Plain-text form of a [`ConvexProgram`], one item per line:
//!
//! ```text
//! vars 2
//! objective -1 0
//! objective-constant 0
//! objective-norm 2 : 1 0 0 1 : -2 0
//! linear 1 1 <= 3
//! quadratic 2 : 1 0 0 1 : 0 0 : 0 0 <= 1
//! ```
//!
//! Matrices are row-major. `#` starts a comment.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{Constraint, ConvexProgram, SquaredNorm};
use crate::error::{Error, Result};

/// Largest variable count accepted by the parser.
pub const MAX_DUMP_VARS: usize = 1 << 16;

fn join(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:?}").expect("write to string");
    }
    out
}

fn norm_text(norm: &SquaredNorm) -> String {
    format!(
        "{} : {} : {}",
        norm.matrix.nrows(),
        join(norm.matrix.transpose().iter().copied()),
        join(norm.offset.iter().copied())
    )
}

/// Renders `program` in the text format.
pub fn write_program(program: &ConvexProgram) -> String {
    let mut out = String::new();
    let obj = program.objective();
    writeln!(out, "vars {}", program.num_vars()).unwrap();
    writeln!(out, "objective {}", join(obj.linear.iter().copied())).unwrap();
    writeln!(out, "objective-constant {:?}", obj.constant).unwrap();
    if let Some(q) = &obj.quadratic {
        writeln!(out, "objective-norm {}", norm_text(q)).unwrap();
    }
    for c in program.constraints() {
        match c {
            Constraint::Linear { coeffs, bound } => {
                writeln!(out, "linear {} <= {bound:?}", join(coeffs.iter().copied())).unwrap()
            }
            Constraint::Quadratic {
                norm,
                coeffs,
                bound,
            } => writeln!(
                out,
                "quadratic {} : {} <= {bound:?}",
                norm_text(norm),
                join(coeffs.iter().copied())
            )
            .unwrap(),
        }
    }
    out
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

impl Line<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.number,
            message: message.into(),
        }
    }

    fn numbers(&self, text: &str) -> Result<Vec<f64>> {
        text.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(format!("bad number {t:?}")))
            })
            .collect()
    }

    fn vector(&self, text: &str, len: usize) -> Result<Vec<f64>> {
        let v = self.numbers(text)?;
        if v.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", v.len())));
        }
        Ok(v)
    }

    /// `rows : F : f` with `n` columns.
    fn norm(&self, parts: &[&str], n: usize) -> Result<SquaredNorm> {
        let [rows, f, off] = parts else {
            return Err(self.err("expected `rows : matrix : offset`"));
        };
        let rows: usize = rows
            .trim()
            .parse()
            .map_err(|_| self.err(format!("bad row count {:?}", rows.trim())))?;
        let entries = self.numbers(f)?;
        if rows.checked_mul(n) != Some(entries.len()) {
            return Err(self.err(format!(
                "matrix has {} entries, expected {rows}x{n}",
                entries.len()
            )));
        }
        let offset = self.vector(off, rows)?;
        SquaredNorm::new(
            DMatrix::from_row_slice(rows, n, &entries),
            DVector::from_vec(offset),
        )
    }

    fn bounded<'t>(&self, text: &'t str) -> Result<(&'t str, f64)> {
        let (lhs, rhs) = text
            .split_once("<=")
            .ok_or_else(|| self.err("missing `<=`"))?;
        let b = self.vector(rhs, 1)?;
        Ok((lhs, b[0]))
    }
}

/// Parses the text format back into a program.
pub fn parse_program(text: &str) -> Result<ConvexProgram> {
    let mut program: Option<ConvexProgram> = None;
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let line = Line {
            number: i + 1,
            text: content,
        };
        let (key, rest) = line
            .text
            .split_once(char::is_whitespace)
            .unwrap_or((line.text, ""));
        if key == "vars" {
            if program.is_some() {
                return Err(line.err("duplicate `vars`"));
            }
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| line.err(format!("bad variable count {:?}", rest.trim())))?;
            if n > MAX_DUMP_VARS {
                return Err(line.err(format!("more than {MAX_DUMP_VARS} variables")));
            }
            program = Some(ConvexProgram::new(n).map_err(|e| line.err(e.to_string()))?);
            continue;
        }
        let p = program
            .as_mut()
            .ok_or_else(|| line.err("`vars` must come first"))?;
        let n = p.num_vars();
        let at = |e: Error| match e {
            Error::Parse { .. } => e,
            other => line.err(other.to_string()),
        };
        match key {
            "objective" => {
                let c = line.vector(rest, n)?;
                p.set_linear_objective(c).map_err(at)?;
            }
            "objective-constant" => p.set_objective_constant(line.vector(rest, 1)?[0]),
            "objective-norm" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let norm = line.norm(&parts, n)?;
                p.set_quadratic_objective(norm).map_err(at)?;
            }
            "linear" => {
                let (lhs, b) = line.bounded(rest)?;
                let a = line.vector(lhs, n)?;
                p.add(Constraint::linear(a, b)).map_err(at)?;
            }
            "quadratic" => {
                let (lhs, b) = line.bounded(rest)?;
                let parts: Vec<&str> = lhs.split(':').collect();
                if parts.len() != 4 {
                    return Err(line.err("expected `rows : matrix : offset : linear <= bound`"));
                }
                let norm = line.norm(&parts[..3], n)?;
                let q = line.vector(parts[3], n)?;
                p.add(Constraint::quadratic(norm, q, b)).map_err(at)?;
            }
            other => return Err(line.err(format!("unknown item {other:?}"))),
        }
    }
    program.ok_or(Error::Parse {
        line: 0,
        message: "empty program".into(),
    })
}
