//! The neural-field training loop.

use super::objective::{
    data_fidelity_with_grads, lhs_sample_with_rng, mc_regularizer_components,
    regularizer_with_grads, DomainBounds, RegWeights,
};
use super::{AdaptiveGamma, NfReconConfig, HistoryRecord, TrainingHistory};
use crate::error::{Error, Result};
use crate::field::{adam_step, init_field, AdamState, NeuralField};
use crate::geom::{ImageGrid, TimeAxis};
use crate::metrics::{psnr, reference_peak};
use crate::projector::FrameProjector;
use crate::sinogram::Sinogram;
use crate::volume::CasoratiImage;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

/// Rasterize the field at every pixel center and frame time.
pub fn render_field(u_field: &NeuralField, grid: &ImageGrid, time_axis: &TimeAxis) -> CasoratiImage {
    let centers = grid.pixel_centers();
    let mut values = Array2::zeros((time_axis.n_frames, grid.n_pixels()));
    for (i, &t) in time_axis.times().iter().enumerate() {
        let points: Vec<[f64; 3]> = centers.iter().map(|&(x, y)| [x, y, t]).collect();
        let out = u_field.eval_batch(&points);
        values
            .row_mut(i)
            .assign(&out.index_axis(ndarray::Axis(1), 0));
    }
    CasoratiImage { values, grid: *grid, time_axis: time_axis.clone() }
}

/// One-shot adaptive rule: raise gamma to the target when the windowed
/// moving average of the flow term grows by more than the trigger ratio.
/// Needs at least two full windows of history; otherwise gamma is kept.
pub fn adaptive_gamma(flow_terms: &[f64], current_gamma: f64, rule: &AdaptiveGamma) -> f64 {
    let w = rule.window;
    if w == 0 || flow_terms.len() < 2 * w {
        return current_gamma;
    }
    let recent = &flow_terms[flow_terms.len() - w..];
    let previous = &flow_terms[flow_terms.len() - 2 * w..flow_terms.len() - w];
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    if mean(recent) > rule.trigger_ratio * mean(previous) {
        rule.target_gamma
    } else {
        current_gamma
    }
}

/// Final and best-PSNR snapshots of a training run.
pub struct TrainOutput {
    pub u_field: NeuralField,
    pub v_field: NeuralField,
    /// Parameters at the best logged PSNR (present when ground truth was
    /// supplied): (u, v, psnr, step).
    pub best: Option<(NeuralField, NeuralField, f64, usize)>,
    pub history: TrainingHistory,
}

impl TrainOutput {
    /// Best snapshot when tracked, final parameters otherwise.
    pub fn best_or_final(&self) -> (&NeuralField, &NeuralField) {
        match &self.best {
            Some((u, v, _, _)) => (u, v),
            None => (&self.u_field, &self.v_field),
        }
    }
}

/// Train the joint image/velocity fields against a sinogram.
///
/// Every iteration samples a frame batch (a per-epoch permutation when
/// `frame_batch < N_T`), draws fresh collocation points over the
/// continuous domain, and applies one Adam step to each field. History is
/// logged every `log_every` epochs; a NaN loss aborts with a diagnostic.
pub fn train(
    config: &NfReconConfig,
    sinogram: &Sinogram,
    grid: &ImageGrid,
    ground_truth: Option<&CasoratiImage>,
) -> Result<TrainOutput> {
    let n_frames = sinogram.n_frames();
    config.validate(n_frames)?;
    if let Some(gt) = ground_truth {
        if gt.n_frames() != n_frames || gt.grid.n_pixels() != grid.n_pixels() {
            return Err(Error::Shape(
                "ground truth must match the reconstruction grid and frame count".into(),
            ));
        }
    }

    let time_axis = TimeAxis::new(
        n_frames,
        *sinogram.times.last().expect("nonempty sinogram"),
    )?;
    let bounds = DomainBounds::new(grid.extent, time_axis.t_final);
    let volume = bounds.volume();
    let n_pixels = grid.n_pixels();
    let n_colloc = ((config.sampling_rate * n_frames as f64 * n_pixels as f64).round() as usize)
        .max(1);

    let mut u_field = init_field(config.seed_u, &config.u_arch)?;
    let mut v_field = init_field(config.seed_v, &config.v_arch)?;
    let mut adam_u = AdamState::new(config.learning_rate, &u_field.params);
    let mut adam_v = AdamState::new(config.learning_rate, &v_field.params);
    let mut sampler = ChaCha12Rng::seed_from_u64(config.seed_sampling);

    let projector = FrameProjector::new(sinogram.geometry, *grid, sinogram.angles.clone())?;
    let centers = grid.pixel_centers();
    let peak = ground_truth.map(reference_peak);

    let mut gamma = config.gamma;
    let mut gamma_switched = false;
    let mut history = TrainingHistory::default();
    let mut best: Option<(NeuralField, NeuralField, f64, usize)> = None;
    let started = Instant::now();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        // Frame order for this epoch: identity for full batch, a fresh
        // permutation otherwise (sampling without replacement).
        let mut order: Vec<usize> = (0..n_frames).collect();
        if config.frame_batch < n_frames {
            for i in (1..n_frames).rev() {
                let j = sampler.gen_range(0..=i);
                order.swap(i, j);
            }
        }

        for chunk in order.chunks(config.frame_batch) {
            step += 1;
            let (data_value, mut grads_u) =
                data_fidelity_with_grads(&u_field, sinogram, &projector, chunk, &centers);

            let weights = RegWeights {
                alpha: config.alpha,
                beta: config.beta,
                gamma,
                eps_smooth: config.eps_smooth,
            };
            let points = lhs_sample_with_rng(n_colloc, &bounds, &mut sampler);
            let (reg_value, _raw, reg_grad_u, grads_v) =
                regularizer_with_grads(&u_field, &v_field, &points, &weights, volume);
            grads_u.add_scaled(&reg_grad_u, 1.0);

            let loss = data_value + reg_value;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    message: format!("loss = {loss} (data {data_value}, reg {reg_value})"),
                });
            }
            adam_step(&mut adam_u, &mut u_field.params, &grads_u).map_err(|e| {
                Error::Diverged { step, message: format!("u update: {e}") }
            })?;
            adam_step(&mut adam_v, &mut v_field.params, &grads_v).map_err(|e| {
                Error::Diverged { step, message: format!("v update: {e}") }
            })?;
        }

        let last_epoch = epoch + 1 == config.epochs;
        if (epoch + 1) % config.log_every.max(1) == 0 || last_epoch {
            // Full data fidelity plus a fresh MC estimate of the raw
            // regularizer integrals at the current parameters.
            let all: Vec<usize> = (0..n_frames).collect();
            let (data_full, _) =
                data_fidelity_with_grads(&u_field, sinogram, &projector, &all, &centers);
            let points = lhs_sample_with_rng(n_colloc, &bounds, &mut sampler);
            let (reg_r, reg_s, reg_a) = mc_regularizer_components(
                &u_field,
                &v_field,
                &points,
                config.eps_smooth,
                volume,
            );
            let psnr_now = match (ground_truth, peak) {
                (Some(gt), Some(peak)) => {
                    let rendered = render_field(&u_field, grid, &time_axis);
                    let p = psnr(&rendered, gt, peak)?;
                    match &best {
                        Some((_, _, bp, _)) if *bp >= p => {}
                        _ => best = Some((u_field.clone(), v_field.clone(), p, step)),
                    }
                    Some(p)
                }
                _ => None,
            };
            history.records.push(HistoryRecord {
                step,
                epoch: epoch + 1,
                data_fidelity: data_full,
                reg_r,
                reg_s,
                reg_a,
                gamma,
                psnr: psnr_now,
                seconds: started.elapsed().as_secs_f64(),
            });

            if let Some(rule) = &config.adaptive {
                if !gamma_switched {
                    let flows = history.flow_terms();
                    let new_gamma = adaptive_gamma(&flows, gamma, rule);
                    if new_gamma != gamma {
                        gamma = new_gamma;
                        gamma_switched = true; // one-shot
                    }
                }
            }
        }
    }

    Ok(TrainOutput { u_field, v_field, best, history })
}
