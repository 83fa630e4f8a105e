//! FMAT: the on-disk feature-matrix format.
//!
//! Layout: magic `FMAT`, u32 rows, u32 cols, then rows*cols little-endian
//! float32 values in row-major order. Values are widened to f64 on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FMAT";

/// Writes a matrix to `path`, narrowing values to f32.
pub fn write_fmat(path: &Path, m: &Array2<f64>) -> Result<()> {
    let (rows, cols) = m.dim();
    if rows > u32::MAX as usize || cols > u32::MAX as usize {
        return Err(Error::invalid("matrix too large for FMAT header"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(rows as u32).to_le_bytes())?;
    w.write_all(&(cols as u32).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix from `path`.
pub fn read_fmat(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected FMAT",
            path.display(),
            magic
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let rows = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let cols = u32::from_le_bytes(buf4) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut buf4)?;
        data.push(f32::from_le_bytes(buf4) as f64);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
