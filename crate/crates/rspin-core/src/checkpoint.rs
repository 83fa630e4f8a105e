//! Checkpoint format: magic `RSPN`, a u16 format version, then named
//! parameter blocks. Each block is a u16 name length, the UTF-8 name,
//! u32 rows, u32 cols, and rows*cols little-endian f64 values row-major.
//! Vectors are stored as 1×n blocks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::encoder::{DenseLayer, Encoder, Nonlinearity};
use crate::error::{Error, Result};
use crate::spin::Codebook;
use crate::trainer::TrainerState;

const MAGIC: &[u8; 4] = b"RSPN";
const VERSION: u16 = 1;

fn write_block(w: &mut impl Write, name: &str, m: &Array2<f64>) -> Result<()> {
    let bytes = name.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::invalid("block name too long"));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    w.write_all(&(m.nrows() as u32).to_le_bytes())?;
    w.write_all(&(m.ncols() as u32).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn row_matrix(v: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("1xn shape")
}

/// Serializes every parameter plus a `meta` block carrying the nonlinearity
/// code, assignment temperature, and smoothing settings.
pub fn save_checkpoint(path: &Path, state: &TrainerState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let nonlin_code = match state.encoder.nonlinearity {
        Nonlinearity::Tanh => 0.0,
        Nonlinearity::Relu => 1.0,
    };
    let meta = Array2::from_shape_vec(
        (1, 4),
        vec![
            nonlin_code,
            state.codebook.temperature,
            state.sinkhorn_eps,
            state.sinkhorn_iters as f64,
        ],
    )
    .expect("meta shape");
    write_block(&mut w, "meta", &meta)?;
    for (i, layer) in state.encoder.layers.iter().enumerate() {
        write_block(&mut w, &format!("enc.{i}.w"), &layer.w)?;
        write_block(&mut w, &format!("enc.{i}.b"), &row_matrix(&layer.b))?;
    }
    write_block(&mut w, "spin.w", &state.spin_head.w)?;
    write_block(&mut w, "spin.b", &row_matrix(&state.spin_head.b))?;
    write_block(&mut w, "codebook", &state.codebook.vectors)?;
    write_block(&mut w, "aux.w", &state.aux_head.w)?;
    write_block(&mut w, "aux.b", &row_matrix(&state.aux_head.b))?;
    w.flush()?;
    Ok(())
}

/// Reads all named blocks from a checkpoint file.
pub fn read_blocks(path: &Path) -> Result<BTreeMap<String, Array2<f64>>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic, expected RSPN",
            path.display()
        )));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let mut blocks = BTreeMap::new();
    loop {
        let mut len_buf = [0u8; 2];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("block name is not UTF-8".to_string()))?;
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let rows = u32::from_le_bytes(buf4) as usize;
        r.read_exact(&mut buf4)?;
        let cols = u32::from_le_bytes(buf4) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf8 = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut buf8)?;
            data.push(f64::from_le_bytes(buf8));
        }
        let m = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Format(format!("block {name}: {e}")))?;
        blocks.insert(name, m);
    }
    Ok(blocks)
}

fn take(blocks: &mut BTreeMap<String, Array2<f64>>, name: &str) -> Result<Array2<f64>> {
    blocks
        .remove(name)
        .ok_or_else(|| Error::Format(format!("checkpoint missing block '{name}'")))
}

fn to_vector(m: Array2<f64>, name: &str) -> Result<Array1<f64>> {
    if m.nrows() != 1 {
        return Err(Error::Format(format!(
            "block '{name}' should be 1×n, got {:?}",
            m.dim()
        )));
    }
    Ok(m.row(0).to_owned())
}

/// Rebuilds a full trainer state from a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<TrainerState> {
    let mut blocks = read_blocks(path)?;
    let meta = take(&mut blocks, "meta")?;
    if meta.dim() != (1, 4) {
        return Err(Error::Format(format!(
            "meta block should be 1×4, got {:?}",
            meta.dim()
        )));
    }
    let nonlinearity = if meta[[0, 0]] == 0.0 {
        Nonlinearity::Tanh
    } else {
        Nonlinearity::Relu
    };
    let temperature = meta[[0, 1]];
    let sinkhorn_eps = meta[[0, 2]];
    let sinkhorn_iters = meta[[0, 3]] as usize;

    let mut layers = Vec::new();
    for i in 0.. {
        let w_name = format!("enc.{i}.w");
        if !blocks.contains_key(&w_name) {
            break;
        }
        let w = take(&mut blocks, &w_name)?;
        let b = to_vector(take(&mut blocks, &format!("enc.{i}.b"))?, "enc.b")?;
        layers.push(DenseLayer { w, b });
    }
    if layers.is_empty() {
        return Err(Error::Format("checkpoint has no encoder layers".to_string()));
    }
    let spin_w = take(&mut blocks, "spin.w")?;
    let spin_b = to_vector(take(&mut blocks, "spin.b")?, "spin.b")?;
    let codebook = Codebook::new(take(&mut blocks, "codebook")?, temperature)?;
    let aux_w = take(&mut blocks, "aux.w")?;
    let aux_b = to_vector(take(&mut blocks, "aux.b")?, "aux.b")?;
    Ok(TrainerState {
        encoder: Encoder {
            layers,
            nonlinearity,
        },
        spin_head: DenseLayer {
            w: spin_w,
            b: spin_b,
        },
        codebook,
        aux_head: DenseLayer { w: aux_w, b: aux_b },
        sinkhorn_eps,
        sinkhorn_iters,
    })
}
