//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::volume::CasoratiImage;

/// Peak signal-to-noise ratio in dB over all spacetime entries:
/// `10 log10(peak^2 / MSE)`. Identical inputs give `f64::INFINITY`.
pub fn psnr(x: &CasoratiImage, reference: &CasoratiImage, peak: f64) -> Result<f64> {
    if x.values.raw_dim() != reference.values.raw_dim() {
        return Err(Error::Shape(format!(
            "psnr shapes differ: {:?} vs {:?}",
            x.values.raw_dim(),
            reference.values.raw_dim()
        )));
    }
    if !(peak > 0.0) {
        return Err(Error::Config(format!("psnr peak must be positive, got {peak}")));
    }
    let mse = x
        .values
        .iter()
        .zip(reference.values.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.values.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Per-frame PSNR values (same peak for every frame).
pub fn psnr_per_frame(x: &CasoratiImage, reference: &CasoratiImage, peak: f64) -> Result<Vec<f64>> {
    if x.values.raw_dim() != reference.values.raw_dim() {
        return Err(Error::Shape("psnr shapes differ".into()));
    }
    if !(peak > 0.0) {
        return Err(Error::Config(format!("psnr peak must be positive, got {peak}")));
    }
    let n = x.values.ncols() as f64;
    Ok((0..x.n_frames())
        .map(|i| {
            let mse = x
                .frame(i)
                .iter()
                .zip(reference.frame(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n;
            if mse == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (peak * peak / mse).log10()
            }
        })
        .collect())
}

/// Default peak convention: the maximum of the reference sequence.
pub fn reference_peak(reference: &CasoratiImage) -> f64 {
    reference.values.iter().fold(0.0f64, |m, &v| m.max(v))
}
