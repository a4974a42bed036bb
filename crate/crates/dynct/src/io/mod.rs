//! Bit-exact file formats, image export and run manifests.

mod config;
mod format;
mod pgm;

pub use config::{fingerprint, parse_config, render_config, ConfigMap};
pub use format::{read_sinogram, read_volume, write_sinogram, write_volume};
pub use pgm::{export_frames, read_pgm};

use crate::error::Result;
use crate::nf::TrainingHistory;
use std::io::Write;
use std::path::Path;

/// Training history as CSV: header row, '.' decimals, LF endings.
pub fn write_history_csv(path: &Path, history: &TrainingHistory) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"step,epoch,data_fidelity,reg_r,reg_s,reg_a,gamma,psnr,seconds\n")?;
    for r in &history.records {
        let psnr = r.psnr.map(|p| format!("{p:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{},{:.3}",
            r.step, r.epoch, r.data_fidelity, r.reg_r, r.reg_s, r.reg_a, r.gamma, psnr, r.seconds
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Per-round objective log of the grid solver.
pub fn write_objective_csv(path: &Path, objectives: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"round,objective\n")?;
    for (i, obj) in objectives.iter().enumerate() {
        writeln!(w, "{i},{obj:.12e}")?;
    }
    w.flush()?;
    Ok(())
}
