//! Snapshot export: CSV and the little-endian SMDA binary format.
//!
//! An SMDA file is a sequence of records, one per snapshot:
//!
//! ```text
//! magic    4 bytes  "SMDA"
//! version  u32      1
//! ndim     u32      1 or 2
//! sizes    u32 × ndim
//! parts    u32      1 (real) or 2 (complex, stored re, im)
//! time     f64
//! axes     f64 × Σ sizes      node coordinates, axis by axis
//! payload  f64 × parts × Π sizes, last axis fastest
//! ```

use std::io::{Read, Write};
use std::sync::Arc;

use super::field::{Grid, GridField};
use crate::error::{Error, Result};
use crate::sms::FieldValue;

pub const SMDA_MAGIC: &[u8; 4] = b"SMDA";
pub const SMDA_VERSION: u32 = 1;

/// CSV rows `t,x,re_u,im_u` (1D) or `t,x,z,u` (2D); real 1D fields get `im_u = 0`.
pub fn write_snapshots_csv<V: FieldValue, W: Write>(snapshots: &[GridField<V>], mut out: W) -> Result<()> {
    let dim = snapshots.first().map_or(1, |s| s.grid.dim());
    if dim == 1 {
        writeln!(out, "t,x,re_u,im_u")?;
    } else {
        writeln!(out, "t,x,z,u")?;
    }
    for s in snapshots {
        for (i, v) in s.values.iter().enumerate() {
            let p = s.grid.point(i);
            if dim == 1 {
                let im = if V::PARTS > 1 { v.part(1) } else { 0.0 };
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", s.time, p[0], v.part(0), im)?;
            } else {
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", s.time, p[0], p[1], v.part(0))?;
            }
        }
    }
    Ok(())
}

pub fn write_smda<V: FieldValue, W: Write>(snapshots: &[GridField<V>], mut out: W) -> Result<()> {
    for s in snapshots {
        out.write_all(SMDA_MAGIC)?;
        out.write_all(&SMDA_VERSION.to_le_bytes())?;
        out.write_all(&(s.grid.dim() as u32).to_le_bytes())?;
        for a in &s.grid.axes {
            out.write_all(&(a.len() as u32).to_le_bytes())?;
        }
        out.write_all(&(V::PARTS as u32).to_le_bytes())?;
        out.write_all(&s.time.to_le_bytes())?;
        for a in &s.grid.axes {
            for x in a {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        for v in &s.values {
            for p in 0..V::PARTS {
                out.write_all(&v.part(p).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads every record. Grid weights and periodicity are not stored, so the
/// returned grids carry unit weights and no period.
pub fn read_smda<V: FieldValue, R: Read>(mut input: R) -> Result<Vec<GridField<V>>> {
    let mut out = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        match input.read(&mut magic[..1])? {
            0 => break,
            _ => input.read_exact(&mut magic[1..])?,
        }
        if &magic != SMDA_MAGIC {
            return Err(Error::Format("bad SMDA magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != SMDA_VERSION {
            return Err(Error::Format(format!("unsupported SMDA version {version}")));
        }
        let ndim = read_u32(&mut input)? as usize;
        if !(1..=2).contains(&ndim) {
            return Err(Error::Format(format!("unsupported dimension {ndim}")));
        }
        let sizes: Vec<usize> = (0..ndim).map(|_| read_u32(&mut input).map(|s| s as usize)).collect::<Result<_>>()?;
        let parts = read_u32(&mut input)? as usize;
        if parts != V::PARTS {
            return Err(Error::Format(format!("record has {parts} components, expected {}", V::PARTS)));
        }
        let time = read_f64(&mut input)?;
        let mut axes = Vec::with_capacity(ndim);
        for &n in &sizes {
            axes.push((0..n).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>()?);
        }
        let count: usize = sizes.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let mut p = [0.0; 2];
            for slot in p.iter_mut().take(parts) {
                *slot = read_f64(&mut input)?;
            }
            values.push(V::from_parts(p));
        }
        let weights = sizes.iter().map(|&n| vec![1.0; n]).collect();
        let grid = Arc::new(Grid { axes, weights, period: vec![None; ndim] });
        out.push(GridField::new(grid, values, time)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn smda_round_trip() {
        let grid = Arc::new(Grid::periodic_1d(-1.0, 1.0, 8));
        let snaps: Vec<GridField<Complex64>> =
            (0..3).map(|k| GridField::from_fn(grid.clone(), 0.5 * k as f64, |p| Complex64::new(p[0], k as f64 - p[0] * p[0]))).collect();
        let mut buf = Vec::new();
        write_smda(&snaps, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SMDA");
        let back: Vec<GridField<Complex64>> = read_smda(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in snaps.iter().zip(&back) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.time, b.time);
            assert_eq!(a.grid.axes, b.grid.axes);
        }
        assert!(read_smda::<f64, _>(buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_smda::<Complex64, _>(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_layout() {
        let grid = Arc::new(Grid::closed_box(1.0, 1.0, 1, 1));
        let snap = GridField::from_fn(grid, 2.0, |p| p[0] + 10.0 * p[1]);
        let mut buf = Vec::new();
        write_snapshots_csv(&[snap], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,z,u");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].ends_with("1.0000000000000000e1"));
    }
}
