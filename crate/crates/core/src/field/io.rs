use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GridSpec, ScalarField};
use crate::{Error, Result};

pub const KSF_MAGIC: &[u8; 4] = b"KSF1";

/// Writes `KSF1`, `u32 n`, `n × u32 N`, `f64 L`, then the values, all little-endian.
pub fn write_ksf_to(field: &ScalarField, mut w: impl Write) -> Result<()> {
    let grid = field.grid();
    w.write_all(KSF_MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    for _ in 0..grid.dim() {
        w.write_all(&(grid.points() as u32).to_le_bytes())?;
    }
    w.write_all(&grid.length().to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ksf(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    write_ksf_to(field, BufWriter::new(File::create(path)?))
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], field: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format {
            field,
            detail: "file truncated".into(),
        },
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read, field: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, field)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_ksf_from(mut r: impl Read) -> Result<ScalarField> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != KSF_MAGIC {
        return Err(Error::Format {
            field: "magic",
            detail: format!("expected \"KSF1\", found {magic:?}"),
        });
    }
    let dim = read_u32(&mut r, "n")? as usize;
    if dim == 0 || dim > 8 {
        return Err(Error::Format {
            field: "n",
            detail: format!("dimension {dim} out of range 1..=8"),
        });
    }
    let mut points = Vec::with_capacity(dim);
    for _ in 0..dim {
        points.push(read_u32(&mut r, "N")? as usize);
    }
    if points.iter().any(|&p| p != points[0]) {
        return Err(Error::Format {
            field: "N",
            detail: format!("per-axis counts {points:?} are not all equal"),
        });
    }
    let mut lb = [0u8; 8];
    read_exact_or(&mut r, &mut lb, "L")?;
    let length = f64::from_le_bytes(lb);
    let grid = GridSpec::new(dim, points[0], length).map_err(|e| Error::Format {
        field: if length > 0.0 && length.is_finite() { "N" } else { "L" },
        detail: e.to_string(),
    })?;
    let mut bytes = vec![0u8; grid.len() * 8];
    read_exact_or(&mut r, &mut bytes, "values")?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format {
            field: "values",
            detail: "trailing bytes after the last value".into(),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::new(grid, values).map_err(|e| Error::Format {
        field: "values",
        detail: e.to_string(),
    })
}

pub fn read_ksf(path: impl AsRef<Path>) -> Result<ScalarField> {
    read_ksf_from(BufReader::new(File::open(path)?))
}
