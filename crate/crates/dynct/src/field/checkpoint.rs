//! Versioned binary checkpoints for neural fields.
//!
//! Layout (all little-endian):
//! - magic `NFCKPT1` (7 bytes)
//! - u32 m_x, m_t, hidden_layers, hidden_width, out_dim
//! - f64 sigma_x, sigma_t
//! - u64 init seed
//! - Bx (m_x*2 doubles, row-major), Bt (m_t doubles)
//! - per layer: W row-major, then b

use super::{FieldArch, FourierEmbedding, MlpParams, NeuralField};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 7] = b"NFCKPT1";

pub fn write_checkpoint(path: &Path, field: &NeuralField) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [
        field.arch.m_x,
        field.arch.m_t,
        field.arch.hidden_layers,
        field.arch.hidden_width,
        field.arch.out_dim,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&field.arch.sigma_x.to_le_bytes())?;
    w.write_all(&field.arch.sigma_t.to_le_bytes())?;
    w.write_all(&field.init_seed.to_le_bytes())?;
    let write_f64s = |w: &mut dyn Write, it: &mut dyn Iterator<Item = f64>| -> Result<()> {
        for v in it {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    write_f64s(&mut w, &mut field.embedding.bx.iter().copied())?;
    write_f64s(&mut w, &mut field.embedding.bt.iter().copied())?;
    for (wgt, b) in field.params.weights.iter().zip(&field.params.biases) {
        write_f64s(&mut w, &mut wgt.iter().copied())?;
        write_f64s(&mut w, &mut b.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<NeuralField> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 7];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let m_x = read_u32(&mut r)? as usize;
    let m_t = read_u32(&mut r)? as usize;
    let hidden_layers = read_u32(&mut r)? as usize;
    let hidden_width = read_u32(&mut r)? as usize;
    let out_dim = read_u32(&mut r)? as usize;
    let sigma_x = read_f64(&mut r)?;
    let sigma_t = read_f64(&mut r)?;
    let init_seed = read_u64(&mut r)?;
    let arch = FieldArch { m_x, m_t, sigma_x, sigma_t, hidden_layers, hidden_width, out_dim };
    arch.validate()?;

    let bx = read_matrix(&mut r, m_x, 2)?;
    let bt = read_matrix(&mut r, m_t, 1)?;

    let mut dims = vec![arch.embed_dim()];
    dims.extend(std::iter::repeat(hidden_width).take(hidden_layers));
    dims.push(out_dim);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..dims.len() - 1 {
        weights.push(read_matrix(&mut r, dims[l + 1], dims[l])?);
        let mut b = Array1::zeros(dims[l + 1]);
        for v in b.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        biases.push(b);
    }
    // Trailing garbage means the file is not what the header promised.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("checkpoint has trailing bytes".into()));
    }
    let field = NeuralField {
        arch,
        embedding: FourierEmbedding { bx, bt },
        params: MlpParams { weights, biases },
        init_seed,
    };
    if !field.params.is_finite() {
        return Err(Error::NonFinite("checkpoint payload".into()));
    }
    Ok(field)
}

fn read_exact(r: &mut dyn Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated checkpoint".into()))
}

fn read_u32(r: &mut dyn Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut dyn Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut dyn Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_matrix(r: &mut dyn Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::super::{init_field, FieldArch};
    use super::*;

    #[test]
    fn roundtrip_bit_exact() {
        let arch = FieldArch {
            m_x: 5,
            m_t: 4,
            sigma_x: 0.2,
            sigma_t: 0.9,
            hidden_layers: 2,
            hidden_width: 6,
            out_dim: 2,
        };
        let field = init_field(99, &arch).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.ckpt");
        write_checkpoint(&path, &field).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(field, back);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let arch = FieldArch {
            m_x: 2,
            m_t: 2,
            sigma_x: 0.1,
            sigma_t: 0.1,
            hidden_layers: 1,
            hidden_width: 3,
            out_dim: 1,
        };
        let field = init_field(1, &arch).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.ckpt");
        write_checkpoint(&path, &field).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_rejected() {
        let arch = FieldArch {
            m_x: 2,
            m_t: 2,
            sigma_x: 0.1,
            sigma_t: 0.1,
            hidden_layers: 1,
            hidden_width: 3,
            out_dim: 1,
        };
        let field = init_field(1, &arch).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.ckpt");
        write_checkpoint(&path, &field).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }
}
