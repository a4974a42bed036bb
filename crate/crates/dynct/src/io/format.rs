//! Binary sinogram and volume containers.
//!
//! Sinogram (`DYNSIN1\0`): magic, u32 M, u32 N_T, f64 dso/dsd/detector
//! width, angles[N_T], times[N_T], data row-major (M rows of N_T), all
//! little-endian doubles.
//!
//! Volume (`DYNVOL1\0`): magic, u32 nx, u32 ny, u32 N_T, f64 extent
//! (x0, x1, y0, y1), f64 t_final, frames in time order with row-major
//! pixels, little-endian doubles.

use crate::error::{Error, Result};
use crate::geom::{FanBeamGeometry, ImageGrid, TimeAxis};
use crate::sinogram::Sinogram;
use crate::volume::CasoratiImage;
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

const SIN_MAGIC: &[u8; 8] = b"DYNSIN1\0";
const VOL_MAGIC: &[u8; 8] = b"DYNVOL1\0";

pub fn write_sinogram(path: &Path, s: &Sinogram) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(SIN_MAGIC)?;
    w.write_all(&(s.geometry.n_sensors as u32).to_le_bytes())?;
    w.write_all(&(s.n_frames() as u32).to_le_bytes())?;
    for v in [s.geometry.dso, s.geometry.dsd, s.geometry.detector_width] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &a in &s.angles {
        w.write_all(&a.to_le_bytes())?;
    }
    for &t in &s.times {
        w.write_all(&t.to_le_bytes())?;
    }
    for v in s.data.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != SIN_MAGIC {
        return Err(Error::Format("bad sinogram magic".into()));
    }
    let m = read_u32(&mut r)? as usize;
    let n_t = read_u32(&mut r)? as usize;
    let dso = read_f64(&mut r)?;
    let dsd = read_f64(&mut r)?;
    let width = read_f64(&mut r)?;
    let geometry = FanBeamGeometry::new(dso, dsd, width, m)?;
    let angles = read_f64_vec(&mut r, n_t)?;
    let times = read_f64_vec(&mut r, n_t)?;
    let flat = read_f64_vec(&mut r, m * n_t)?;
    expect_eof(&mut r, "sinogram")?;
    let data = Array2::from_shape_vec((m, n_t), flat).expect("shape from header");
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::Format("sinogram payload contains non-finite values".into()));
    }
    Sinogram::new(data, angles, times, geometry)
}

pub fn write_volume(path: &Path, u: &CasoratiImage) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(VOL_MAGIC)?;
    for v in [u.grid.nx as u32, u.grid.ny as u32, u.n_frames() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let (x0, x1, y0, y1) = u.grid.extent;
    for v in [x0, x1, y0, y1, u.time_axis.t_final] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in u.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<CasoratiImage> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != VOL_MAGIC {
        return Err(Error::Format("bad volume magic".into()));
    }
    let nx = read_u32(&mut r)? as usize;
    let ny = read_u32(&mut r)? as usize;
    let n_t = read_u32(&mut r)? as usize;
    let x0 = read_f64(&mut r)?;
    let x1 = read_f64(&mut r)?;
    let y0 = read_f64(&mut r)?;
    let y1 = read_f64(&mut r)?;
    let t_final = read_f64(&mut r)?;
    let grid = ImageGrid::new(nx, ny, (x0, x1, y0, y1))?;
    let time_axis = TimeAxis::new(n_t, t_final)?;
    let flat = read_f64_vec(&mut r, n_t * nx * ny)?;
    expect_eof(&mut r, "volume")?;
    let values = Array2::from_shape_vec((n_t, nx * ny), flat).expect("shape from header");
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::Format("volume payload contains non-finite values".into()));
    }
    CasoratiImage::new(values, grid, time_axis)
}

fn read_exact(r: &mut dyn Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format("truncated file".into()))
}

fn read_u32(r: &mut dyn Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut dyn Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64_vec(r: &mut dyn Read, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for v in out.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(out)
}

fn expect_eof(r: &mut dyn Read, what: &str) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format(format!("{what} file longer than its header promises")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::SamplingSchedule;
    use crate::phantom::{synthesize_ground_truth, synthesize_sinogram, Phantom};

    fn sample_sinogram() -> Sinogram {
        let phantom = Phantom::two_square();
        let geom = FanBeamGeometry::preset_two_square();
        let axis = TimeAxis::new(100, 1.0).unwrap();
        let sched = SamplingSchedule::Random { seed: 1 };
        synthesize_sinogram(&phantom, &geom, &sched, &axis, 0.01, 4, 64).unwrap()
    }

    #[test]
    fn sinogram_roundtrip_bit_exact_and_sized() {
        let s = sample_sinogram();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two_square.sin");
        write_sinogram(&path, &s).unwrap();

        // Header + angles + times + payload for a 64 x 100 file:
        // 8 + 4 + 4 + 3*8 + 100*8 + 100*8 + 64*100*8 bytes.
        let expect = 8 + 4 + 4 + 3 * 8 + 100 * 8 + 100 * 8 + 64 * 100 * 8;
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expect as u64);

        let back = read_sinogram(&path).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn sinogram_corruption_detected() {
        let s = sample_sinogram();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.sin");
        write_sinogram(&path, &s).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[3] = b'?';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(read_sinogram(&path), Err(Error::Format(_))));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_sinogram(&path), Err(Error::Format(_))));

        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, &longer).unwrap();
        assert!(matches!(read_sinogram(&path), Err(Error::Format(_))));

        let mut nan = bytes;
        let off = 8 + 8 + 24 + 1600; // first data entry
        nan[off..off + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        std::fs::write(&path, &nan).unwrap();
        assert!(read_sinogram(&path).is_err());
    }

    #[test]
    fn volume_roundtrip_and_pooling_transparency() {
        let phantom = Phantom::two_square();
        let axis = TimeAxis::new(5, 1.0).unwrap();
        let vol = synthesize_ground_truth(&phantom, 16, 64, &axis).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.vol");
        write_volume(&path, &vol).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(vol, back);

        // Round-trip transparency under pooling.
        let pooled_direct = crate::volume::pool_average_volume(&vol, 2).unwrap();
        let pooled_back = crate::volume::pool_average_volume(&back, 2).unwrap();
        assert_eq!(pooled_direct, pooled_back);
    }

    #[test]
    fn volume_header_payload_mismatch_rejected() {
        let phantom = Phantom::two_square();
        let axis = TimeAxis::new(3, 1.0).unwrap();
        let vol = synthesize_ground_truth(&phantom, 8, 64, &axis).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.vol");
        write_volume(&path, &vol).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Claim 4 frames in the header while keeping a 3-frame payload.
        bytes[16..20].copy_from_slice(&4u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Format(_))));
    }
}
