//! Stable on-disk formats for scalar fields.
//!
//! CSV: `#`-prefixed header lines carrying `key=value` pairs (at least
//! `n_phi` and `n_theta`), a column line `phi,theta,weight,value`, then one row
//! per node in grid order. Floats use the shortest representation that reads
//! back to the same bits.
//!
//! Binary, little endian: magic `SVFD`, `u32` version, `u32` n_phi, `u32`
//! n_theta, then one `f64` per node in grid order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{HemisphereGrid, ScalarField};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SVFD";
const COLUMNS: &str = "phi,theta,weight,value";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Writes `v` as CSV; `header` pairs are emitted before the grid dimensions.
pub fn write_csv<W: Write>(v: &ScalarField, header: &[(String, String)], out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let g = v.grid();
    writeln!(out, "# format_version={FORMAT_VERSION}")?;
    for (k, val) in header {
        writeln!(out, "# {k}={val}")?;
    }
    writeln!(out, "# n_phi={}", g.n_phi())?;
    writeln!(out, "# n_theta={}", g.n_theta())?;
    writeln!(out, "{COLUMNS}")?;
    for (i, x) in v.values().iter().enumerate() {
        let c = g.coords(i);
        writeln!(out, "{},{},{},{}", c.phi, c.theta, g.weight(i), x)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a CSV field, returning it with its header pairs.
pub fn read_csv<R: Read>(input: R) -> Result<(ScalarField, BTreeMap<String, String>)> {
    let mut header = BTreeMap::new();
    let mut lines = BufReader::new(input).lines();
    let mut columns_seen = false;
    for line in lines.by_ref() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, val)) = rest.trim().split_once('=') {
                header.insert(k.trim().to_string(), val.trim().to_string());
            }
        } else if line.trim() == COLUMNS {
            columns_seen = true;
            break;
        } else if !line.trim().is_empty() {
            return Err(format_err(format!(
                "unexpected line before columns: {line}"
            )));
        }
    }
    if !columns_seen {
        return Err(format_err("missing column line"));
    }
    let dim = |k: &str| -> Result<usize> {
        header
            .get(k)
            .ok_or_else(|| format_err(format!("missing header {k}")))?
            .parse()
            .map_err(|_| format_err(format!("bad header {k}")))
    };
    let grid = Arc::new(HemisphereGrid::new(dim("n_phi")?, dim("n_theta")?)?);
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let i = values.len();
        if i >= grid.len() {
            return Err(format_err("more rows than grid nodes"));
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format_err(format!("bad row {}: {line}", i + 1)))?;
        if cols.len() != 4 {
            return Err(format_err(format!(
                "row {} has {} columns",
                i + 1,
                cols.len()
            )));
        }
        let c = grid.coords(i);
        if (cols[0] - c.phi).abs() > 1e-12 || (cols[1] - c.theta).abs() > 1e-12 {
            return Err(format_err(format!(
                "row {} does not match the grid node",
                i + 1
            )));
        }
        values.push(cols[3]);
    }
    if values.len() != grid.len() {
        return Err(format_err(format!(
            "expected {} rows, found {}",
            grid.len(),
            values.len()
        )));
    }
    Ok((ScalarField::new(grid, values)?, header))
}

pub fn write_binary<W: Write>(v: &ScalarField, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(v.grid().n_phi() as u32).to_le_bytes())?;
    out.write_all(&(v.grid().n_theta() as u32).to_le_bytes())?;
    for x in v.values() {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<ScalarField> {
    let mut head = [0u8; 16];
    input.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(format_err("not a binary field file"));
    }
    let word = |k: usize| u32::from_le_bytes(head[4 * k..4 * k + 4].try_into().unwrap());
    if word(1) != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported field format version {}",
            word(1)
        )));
    }
    let grid = Arc::new(HemisphereGrid::new(word(2) as usize, word(3) as usize)?);
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.len() {
        return Err(format_err("payload size does not match the grid"));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::new(grid, values)
}

/// Saves by extension: `.csv` as CSV, anything else binary.
pub fn save(v: &ScalarField, header: &[(String, String)], path: &Path) -> Result<()> {
    let f = fs::File::create(path)?;
    if is_csv(path) {
        write_csv(v, header, f)
    } else {
        write_binary(v, f)
    }
}

pub fn load(path: &Path) -> Result<ScalarField> {
    let f = fs::File::open(path)?;
    if is_csv(path) {
        Ok(read_csv(f)?.0)
    } else {
        read_binary(f)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
