//! Plain-text coefficient dumps.
//!
//! ```text
//! # qpfk-coefficients dim=2 N=8
//! # <free-form header lines>
//! -4 -4 0.0000000000000000e0 0.0000000000000000e0
//! ...
//! ```
//!
//! One line per lattice index of the band, sorted lexicographically, with
//! 17 significant digits so every double survives the round trip.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::torus::{LatticeIndex, TorusError, TorusFunction};

const MAGIC: &str = "# qpfk-coefficients";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Torus(#[from] TorusError),
}

/// Writes `f` with extra `#` header lines.
pub fn write_dump<W: Write>(f: &TorusFunction, header: &[String], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{MAGIC} dim={} N={}", f.dim(), f.resolution())?;
    for h in header {
        writeln!(w, "# {h}")?;
    }
    let mut line = String::new();
    for (k, c) in f.all_modes() {
        line.clear();
        for x in &k.0 {
            line.push_str(&x.to_string());
            line.push(' ');
        }
        line.push_str(&format!("{:.16e} {:.16e}", c.re, c.im));
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Reads a dump written by [`write_dump`].
pub fn read_dump<R: BufRead>(r: R) -> Result<TorusFunction, DumpError> {
    let mut shape: Option<(usize, usize)> = None;
    let mut modes = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let parse_err = |msg: String| DumpError::Parse { line: lineno, msg };
        if let Some(rest) = line.strip_prefix(MAGIC) {
            shape = Some(parse_shape(rest).ok_or_else(|| parse_err("bad shape header".into()))?);
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (dim, _) = shape.ok_or_else(|| parse_err("missing shape header".into()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(format!(
                "expected {} fields, got {}",
                dim + 2,
                fields.len()
            )));
        }
        let k = fields[..dim]
            .iter()
            .map(|s| s.parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(e.to_string()))?;
        let re: f64 = fields[dim]
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?;
        let im: f64 = fields[dim + 1]
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?;
        modes.push((LatticeIndex(k), Complex64::new(re, im)));
    }
    let (dim, n) = shape.ok_or(DumpError::Parse {
        line: 0,
        msg: "missing shape header".into(),
    })?;
    let mut f = TorusFunction::zeros(dim, n)?;
    let mut coeffs = f.coeffs().to_vec();
    for (k, c) in modes {
        let flat = f.flat_index(&k).ok_or(TorusError::OutOfBand(k, n))?;
        coeffs[flat] = c;
    }
    f = TorusFunction::from_coeffs(dim, n, coeffs)?;
    Ok(f)
}

fn parse_shape(rest: &str) -> Option<(usize, usize)> {
    let mut dim = None;
    let mut n = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("dim=") {
            dim = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("N=") {
            n = v.parse().ok();
        }
    }
    Some((dim?, n?))
}
