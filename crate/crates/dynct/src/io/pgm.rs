//! 16-bit binary PGM (P5) frame export with linear windowing.

use crate::error::{Error, Result};
use crate::volume::CasoratiImage;
use std::io::{Read, Write};
use std::path::Path;

/// Write one `frame_NNNN.pgm` per frame plus a `frames.csv` of per-frame
/// min/max. Values map linearly from `window = (lo, hi)` (or the sequence
/// min/max when `None`) to 0..65535 with the floor convention
/// `q = floor((v - lo)/(hi - lo) * 65536)`, clamped.
pub fn export_frames(
    u: &CasoratiImage,
    dir: &Path,
    window: Option<(f64, f64)>,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let (lo, hi) = match window {
        Some((lo, hi)) => {
            if !(hi > lo) {
                return Err(Error::Config(format!("empty window ({lo}, {hi})")));
            }
            (lo, hi)
        }
        None => {
            let lo = u.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo, lo + 1.0)
            }
        }
    };
    let scale = 65536.0 / (hi - lo);

    let mut paths = Vec::with_capacity(u.n_frames());
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("frames.csv"))?);
    csv.write_all(b"frame,min,max\n")?;
    for i in 0..u.n_frames() {
        let frame = u.frame(i);
        let path = dir.join(format!("frame_{i:04}.pgm"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        write!(w, "P5\n{} {}\n65535\n", u.grid.nx, u.grid.ny)?;
        for &v in frame.iter() {
            let q = (((v - lo) * scale).floor() as i64).clamp(0, 65535) as u16;
            w.write_all(&q.to_be_bytes())?; // 16-bit PGM samples are big-endian
        }
        w.flush()?;
        let fmin = frame.iter().copied().fold(f64::INFINITY, f64::min);
        let fmax = frame.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        writeln!(csv, "{i},{fmin:.9e},{fmax:.9e}")?;
        paths.push(path);
    }
    csv.flush()?;
    Ok(paths)
}

/// Minimal P5 reader used by the round-trip tests: returns (width,
/// height, raw 16-bit samples).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_err = || Error::Format("bad PGM header".into());
    // Three whitespace-delimited header tokens after the magic.
    if !bytes.starts_with(b"P5") {
        return Err(header_err());
    }
    let mut pos = 2;
    let mut tokens = Vec::new();
    while tokens.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(header_err());
        }
        tokens.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| header_err())?
                .parse::<usize>()
                .map_err(|_| header_err())?,
        );
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval != 65535 {
        return Err(Error::Format(format!("expected 16-bit PGM, maxval {maxval}")));
    }
    let need = w * h * 2;
    if bytes.len() - pos != need {
        return Err(Error::Format("PGM payload size mismatch".into()));
    }
    let data = bytes[pos..]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((w, h, data))
}
