use crate::fields::{FieldError, Grid, GridField, Target, UNIT_TOL};
use crate::geometry::{AxisBox, GeometryError};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SfldError {
    #[error("malformed SFLD header: {0}")]
    Header(String),
    #[error("malformed SFLD body: {0}")]
    Body(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Body encoding of an SFLD file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Ascii,
    Bin64,
}

const BINARY_TAG: &str = "bin64";

/// Writes `u` as `SFLD v1`: a header line, then the node values in
/// row-major order (last axis fastest), either as shortest round-trip
/// decimal text with one node per line or as a `bin64` tag line followed
/// by little-endian IEEE-754 doubles. Masked nodes are written as `NaN`.
pub fn write_field<W: Write>(u: &GridField, encoding: Encoding, mut out: W) -> Result<(), SfldError> {
    let grid = u.grid();
    let bx = grid.bx();
    let dims: Vec<String> = grid.dims().iter().map(|d| d.to_string()).collect();
    let ranges: Vec<String> = (0..grid.dim())
        .map(|a| format!("{}:{}", bx.lo()[a], bx.hi()[a]))
        .collect();
    writeln!(
        out,
        "SFLD v1 m={} nu={} dims={} box={}",
        grid.dim(),
        u.nu(),
        dims.join(","),
        ranges.join(",")
    )?;
    match encoding {
        Encoding::Ascii => {
            for row in u.values().chunks(u.nu()) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
        Encoding::Bin64 => {
            writeln!(out, "{BINARY_TAG}")?;
            for v in u.values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

struct Header {
    m: usize,
    nu: usize,
    dims: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn parse_header(line: &str) -> Result<Header, SfldError> {
    let err = |s: &str| SfldError::Header(format!("{s} in {line:?}"));
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("SFLD") || tokens.next() != Some("v1") {
        return Err(err("expected 'SFLD v1'"));
    }
    let (mut m, mut nu, mut dims, mut bx) = (None, None, None, None);
    for t in tokens {
        let (key, value) = t.split_once('=').ok_or_else(|| err("expected key=value"))?;
        match key {
            "m" => m = Some(value.parse::<usize>().map_err(|_| err("bad m"))?),
            "nu" => nu = Some(value.parse::<usize>().map_err(|_| err("bad nu"))?),
            "dims" => {
                dims = Some(
                    value
                        .split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| err("bad dims"))?,
                )
            }
            "box" => {
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                for r in value.split(',') {
                    let (a, b) = r.split_once(':').ok_or_else(|| err("bad box range"))?;
                    lo.push(a.parse::<f64>().map_err(|_| err("bad box bound"))?);
                    hi.push(b.parse::<f64>().map_err(|_| err("bad box bound"))?);
                }
                bx = Some((lo, hi));
            }
            _ => return Err(err("unknown key")),
        }
    }
    let (m, nu, dims, (lo, hi)) = match (m, nu, dims, bx) {
        (Some(m), Some(nu), Some(d), Some(b)) => (m, nu, d, b),
        _ => return Err(err("missing m, nu, dims or box")),
    };
    if dims.len() != m || lo.len() != m {
        return Err(err("dims and box must have m entries"));
    }
    Ok(Header { m, nu, dims, lo, hi })
}

/// Reads an `SFLD v1` field. `NaN` values mark masked nodes. Without an
/// explicit target, a field with `nu >= 2` whose unmasked values are all
/// unit vectors is taken as sphere-valued, any other as unconstrained.
pub fn read_field<R: BufRead>(mut input: R, target: Option<Target>) -> Result<GridField, SfldError> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let h = parse_header(line.trim_end())?;
    let count = h.nu * h.dims.iter().product::<usize>();
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    let tag = format!("{BINARY_TAG}\n");
    let values: Vec<f64> = if rest.starts_with(tag.as_bytes()) {
        let body = &rest[tag.len()..];
        if body.len() != 8 * count {
            return Err(SfldError::Body(format!(
                "expected {} bytes of bin64 data, found {}",
                8 * count,
                body.len()
            )));
        }
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8 bytes")))
            .collect()
    } else {
        let text = std::str::from_utf8(&rest).map_err(|e| SfldError::Body(e.to_string()))?;
        let vals = text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SfldError::Body(e.to_string()))?;
        if vals.len() != count {
            return Err(SfldError::Body(format!(
                "expected {count} values, found {}",
                vals.len()
            )));
        }
        vals
    };
    let bx = AxisBox::new(h.lo, h.hi)?;
    let grid = Grid::new(&bx, &h.dims)?;
    let mask: Vec<bool> = values.chunks(h.nu).map(|v| v.iter().any(|c| !c.is_finite())).collect();
    let target = target.unwrap_or_else(|| {
        let unit = values
            .chunks(h.nu)
            .zip(&mask)
            .all(|(v, &masked)| masked || (v.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs() <= UNIT_TOL);
        if h.nu >= 2 && unit {
            Target::Sphere(h.nu - 1)
        } else {
            Target::Unconstrained
        }
    });
    debug_assert_eq!(grid.dim(), h.m);
    Ok(GridField::from_values(grid, h.nu, target, values, mask)?)
}
