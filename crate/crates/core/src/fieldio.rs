//! Binary field dumps.
//!
//! One ASCII header line `kgzfield v1 <components> <points_per_axis> <L> <t>\n`
//! followed by little-endian `f64` samples in `(component, x2, x1)` row-major
//! order. Floats in the header use Rust's shortest round-trip formatting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array3;

use crate::error::{KgzError, Result};
use crate::grid::{Field, Grid};

const MAGIC: &str = "kgzfield";
const VERSION: &str = "v1";

pub fn header_line(field: &Field, t: f64) -> String {
    let g = field.grid();
    format!(
        "{MAGIC} {VERSION} {} {} {} {}\n",
        field.components(),
        g.points_per_axis(),
        g.half_width(),
        t
    )
}

pub fn write_field<W: Write>(mut w: W, field: &Field, t: f64) -> Result<()> {
    w.write_all(header_line(field, t).as_bytes())?;
    let mut buf = Vec::with_capacity(field.data().len() * 8);
    for v in field.data().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a dump. When `grid` is given the header must match it and the
/// returned field shares that grid; otherwise a grid is built from the header.
pub fn read_field<R: Read>(r: R, grid: Option<&Arc<Grid>>) -> Result<(Field, f64)> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let line = line
        .strip_suffix('\n')
        .ok_or_else(|| KgzError::Format("missing header newline".into()))?;
    let parts: Vec<&str> = line.split(' ').collect();
    if parts.len() != 6 || parts[0] != MAGIC || parts[1] != VERSION {
        return Err(KgzError::Format(format!("bad header `{line}`")));
    }
    let parse_err = |what: &str| KgzError::Format(format!("bad {what} in header `{line}`"));
    let comps: usize = parts[2].parse().map_err(|_| parse_err("component count"))?;
    let n: usize = parts[3].parse().map_err(|_| parse_err("points_per_axis"))?;
    let half_width: f64 = parts[4].parse().map_err(|_| parse_err("box half width"))?;
    let t: f64 = parts[5].parse().map_err(|_| parse_err("time"))?;
    if comps != 1 && comps != 2 {
        return Err(parse_err("component count"));
    }
    let grid = match grid {
        Some(g) => {
            if g.points_per_axis() != n || g.half_width() != half_width {
                return Err(KgzError::ShapeMismatch(format!(
                    "dump grid {n} x L={half_width} differs from expected grid"
                )));
            }
            Arc::clone(g)
        }
        None => Grid::new(n, half_width)?,
    };
    let count = comps * n * n;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(KgzError::Format("trailing bytes after field data".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let data = Array3::from_shape_vec((comps, n, n), values)
        .map_err(|e| KgzError::Format(e.to_string()))?;
    Ok((Field::from_array(&grid, data)?, t))
}

pub fn save_field(path: &Path, field: &Field, t: f64) -> Result<()> {
    write_field(BufWriter::new(File::create(path)?), field, t)
}

pub fn load_field(path: &Path, grid: Option<&Arc<Grid>>) -> Result<(Field, f64)> {
    read_field(File::open(path)?, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn header_is_exact() {
        let g = make_grid(8, 40.0).unwrap();
        let f = Field::zeros(&g, 2);
        assert_eq!(header_line(&f, 0.15), "kgzfield v1 2 8 40 0.15\n");
        let mut buf = Vec::new();
        write_field(&mut buf, &f, 1.5).unwrap();
        assert_eq!(buf.len(), "kgzfield v1 2 8 40 1.5\n".len() + 2 * 64 * 8);
    }

    #[test]
    fn layout_is_component_then_x2_then_x1() {
        let g = make_grid(8, 1.0).unwrap();
        let f = Field::from_fn(&g, 2, |c, x1, x2| c as f64 * 100.0 + x2 * 10.0 + x1);
        let mut buf = Vec::new();
        write_field(&mut buf, &f, 0.0).unwrap();
        let hdr = header_line(&f, 0.0).len();
        let at = |idx: usize| f64::from_le_bytes(buf[hdr + 8 * idx..hdr + 8 * idx + 8].try_into().unwrap());
        let x = g.coords();
        // second sample: x1 advances first
        assert_eq!(at(1), x[0] * 10.0 + x[1]);
        assert_eq!(at(8), x[1] * 10.0 + x[0]);
        assert_eq!(at(64), 100.0 + x[0] * 10.0 + x[0]);
    }

    #[test]
    fn rejects_corrupt_input() {
        let g = make_grid(8, 1.0).unwrap();
        let f = Field::zeros(&g, 1);
        let mut buf = Vec::new();
        write_field(&mut buf, &f, 0.0).unwrap();
        assert!(read_field(&buf[..buf.len() - 1], None).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_field(&extra[..], None).is_err());
        assert!(read_field(&b"kgzfield v2 1 8 1 0\n"[..], None).is_err());
        let other = make_grid(8, 2.0).unwrap();
        assert!(read_field(&buf[..], Some(&other)).is_err());
    }
}
