//! Loss terms: mini-batched data fidelity, the Monte-Carlo PDE
//! regularizer over Latin-Hypercube collocation points, and their
//! closed-form cotangents feeding the field backward sweep.

use super::DifferentiableField;
use crate::error::{Error, Result};
use crate::field::{MlpParams, NeuralField};
use crate::geom::ImageGrid;
use crate::projector::FrameProjector;
use crate::sinogram::Sinogram;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Axis-aligned space-time box Omega_T = [x0,x1] x [y0,y1] x [0,T].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub t: (f64, f64),
}

impl DomainBounds {
    pub fn new(extent: (f64, f64, f64, f64), t_final: f64) -> Self {
        Self { x: (extent.0, extent.1), y: (extent.2, extent.3), t: (0.0, t_final) }
    }

    pub fn volume(&self) -> f64 {
        (self.x.1 - self.x.0) * (self.y.1 - self.y.0) * (self.t.1 - self.t.0)
    }
}

/// Latin Hypercube sample: in every coordinate, exactly one point falls in
/// each of the `n` equal strata. Deterministic under the seed.
pub fn lhs_sample(n_points: usize, bounds: &DomainBounds, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    lhs_sample_with_rng(n_points, bounds, &mut rng)
}

/// Same as [`lhs_sample`] but advancing a caller-owned stream, so a
/// training loop draws fresh points every iteration reproducibly.
pub fn lhs_sample_with_rng(
    n_points: usize,
    bounds: &DomainBounds,
    rng: &mut ChaCha12Rng,
) -> Vec<[f64; 3]> {
    let n = n_points;
    let mut points = vec![[0.0; 3]; n];
    for (dim, (lo, hi)) in [bounds.x, bounds.y, bounds.t].into_iter().enumerate() {
        // Fisher-Yates permutation of the strata.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let width = (hi - lo) / n as f64;
        for (i, point) in points.iter_mut().enumerate() {
            let offset = rng.gen::<f64>();
            point[dim] = lo + (perm[i] as f64 + offset) * width;
        }
    }
    points
}

/// Regularizer weights plus the Charbonnier smoothing knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eps_smooth: f64,
}

/// Smoothed square root of a squared magnitude: sqrt(s + eps^2) - eps.
fn smooth_sqrt(s: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        s.sqrt()
    } else {
        (s + eps * eps).sqrt() - eps
    }
}

/// d/ds of [`smooth_sqrt`]; subgradient 0 at s = 0 when eps = 0.
fn smooth_sqrt_dds(s: f64, eps: f64) -> f64 {
    let root = (s + eps * eps).sqrt();
    if root == 0.0 {
        0.0
    } else {
        0.5 / root
    }
}

/// The regularizer integrand at one point:
/// `alpha ||grad u|| + beta sum_j ||grad v_j|| + gamma |du/dt + v.grad u|`.
pub fn eta(
    u_field: &dyn DifferentiableField,
    v_field: &dyn DifferentiableField,
    point: [f64; 3],
    weights: &RegWeights,
) -> f64 {
    let [x, y, t] = point;
    let (_, ux, uy, ut) = u_field.eval_with_derivs(x, y, t);
    let (v, vx, vy, _) = v_field.eval_with_derivs(x, y, t);
    let eps = weights.eps_smooth;

    let r = smooth_sqrt(ux[0] * ux[0] + uy[0] * uy[0], eps);
    let s: f64 = (0..v_field.out_dim())
        .map(|j| smooth_sqrt(vx[j] * vx[j] + vy[j] * vy[j], eps))
        .sum();
    let flow = ut[0] + v[0] * ux[0] + v[1] * uy[0];
    let a = smooth_sqrt(flow * flow, eps);
    weights.alpha * r + weights.beta * s + weights.gamma * a
}

/// Monte-Carlo estimate `(|Omega_T| / N_C) sum_c eta(point_c)`.
pub fn mc_regularizer(
    u_field: &dyn DifferentiableField,
    v_field: &dyn DifferentiableField,
    points: &[[f64; 3]],
    weights: &RegWeights,
    volume: f64,
) -> f64 {
    let sum: f64 = points.iter().map(|&p| eta(u_field, v_field, p, weights)).sum();
    volume / points.len() as f64 * sum
}

/// Unweighted MC estimates of the three integrals (R, S, A), useful for
/// logging and the adaptive-gamma trigger.
pub fn mc_regularizer_components(
    u_field: &dyn DifferentiableField,
    v_field: &dyn DifferentiableField,
    points: &[[f64; 3]],
    eps_smooth: f64,
    volume: f64,
) -> (f64, f64, f64) {
    let (mut r_sum, mut s_sum, mut a_sum) = (0.0, 0.0, 0.0);
    for &[x, y, t] in points {
        let (_, ux, uy, ut) = u_field.eval_with_derivs(x, y, t);
        let (v, vx, vy, _) = v_field.eval_with_derivs(x, y, t);
        r_sum += smooth_sqrt(ux[0] * ux[0] + uy[0] * uy[0], eps_smooth);
        for j in 0..v_field.out_dim() {
            s_sum += smooth_sqrt(vx[j] * vx[j] + vy[j] * vy[j], eps_smooth);
        }
        let flow = ut[0] + v[0] * ux[0] + v[1] * uy[0];
        a_sum += smooth_sqrt(flow * flow, eps_smooth);
    }
    let scale = volume / points.len() as f64;
    (scale * r_sum, scale * s_sum, scale * a_sum)
}

/// MC estimate of the spatiotemporal TV integral
/// `sqrt(||grad u||^2 + (du/dt)^2)` over the same collocation points.
pub fn stv_regularizer(
    u_field: &dyn DifferentiableField,
    points: &[[f64; 3]],
    eps_smooth: f64,
    volume: f64,
) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|&[x, y, t]| {
            let (_, ux, uy, ut) = u_field.eval_with_derivs(x, y, t);
            smooth_sqrt(ux[0] * ux[0] + uy[0] * uy[0] + ut[0] * ut[0], eps_smooth)
        })
        .sum();
    volume / points.len() as f64 * sum
}

/// Mini-batch data fidelity
/// `(1/|batch|) sum_i 1/2 ||K_i u(., t_i) - f_i||^2`, rasterizing the
/// field at the pixel centers of `grid` for each chosen frame.
pub fn data_fidelity_batch(
    u_field: &NeuralField,
    sinogram: &Sinogram,
    frame_indices: &[usize],
    grid: &ImageGrid,
) -> Result<f64> {
    if frame_indices.is_empty() {
        return Err(Error::Config("empty frame batch".into()));
    }
    let mut distinct = frame_indices.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != frame_indices.len() {
        return Err(Error::Config("frame batch indices must be distinct".into()));
    }
    if *distinct.last().unwrap() >= sinogram.n_frames() {
        return Err(Error::Shape("frame index out of range".into()));
    }
    let projector = FrameProjector::new(
        sinogram.geometry,
        *grid,
        frame_indices.iter().map(|&i| sinogram.angles[i]).collect(),
    )?;
    let centers = grid.pixel_centers();
    let mut total = 0.0;
    let mut measured = vec![0.0; sinogram.n_sensors()];
    for (k, &i) in frame_indices.iter().enumerate() {
        let t = sinogram.times[i];
        let points: Vec<[f64; 3]> = centers.iter().map(|&(x, y)| [x, y, t]).collect();
        let raster = u_field.eval_batch(&points);
        projector.project(k, raster.as_slice().unwrap(), &mut measured);
        let f = sinogram.frame(i);
        total += 0.5
            * measured
                .iter()
                .zip(f.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
    }
    Ok(total / frame_indices.len() as f64)
}

/// Value and parameter gradients of the regularizer MC estimate, via
/// closed-form cotangents of eta pushed through the network backward
/// sweeps. Returns (weighted value, raw (R,S,A), grad_u, grad_v).
pub(crate) fn regularizer_with_grads(
    u_field: &NeuralField,
    v_field: &NeuralField,
    points: &[[f64; 3]],
    weights: &RegWeights,
    volume: f64,
) -> (f64, (f64, f64, f64), MlpParams, MlpParams) {
    let n = points.len();
    let scale = volume / n as f64;
    let eps = weights.eps_smooth;

    let u_trace = u_field.forward(points, [true, true, true]);
    let v_trace = v_field.forward(points, [true, true, false]);

    let ux = u_trace.out_tan[0].as_ref().unwrap();
    let uy = u_trace.out_tan[1].as_ref().unwrap();
    let ut = u_trace.out_tan[2].as_ref().unwrap();
    let v = &v_trace.out;
    let vx = v_trace.out_tan[0].as_ref().unwrap();
    let vy = v_trace.out_tan[1].as_ref().unwrap();

    let mut cot_ux = Array2::zeros((n, 1));
    let mut cot_uy = Array2::zeros((n, 1));
    let mut cot_ut = Array2::zeros((n, 1));
    let mut cot_v = Array2::zeros((n, 2));
    let mut cot_vx = Array2::zeros((n, 2));
    let mut cot_vy = Array2::zeros((n, 2));

    let (mut r_sum, mut s_sum, mut a_sum) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (gx, gy, gt) = (ux[(i, 0)], uy[(i, 0)], ut[(i, 0)]);

        let s_r = gx * gx + gy * gy;
        r_sum += smooth_sqrt(s_r, eps);
        let dr = smooth_sqrt_dds(s_r, eps);
        cot_ux[(i, 0)] += scale * weights.alpha * dr * 2.0 * gx;
        cot_uy[(i, 0)] += scale * weights.alpha * dr * 2.0 * gy;

        for j in 0..2 {
            let (wx, wy) = (vx[(i, j)], vy[(i, j)]);
            let s_v = wx * wx + wy * wy;
            s_sum += smooth_sqrt(s_v, eps);
            let ds = smooth_sqrt_dds(s_v, eps);
            cot_vx[(i, j)] += scale * weights.beta * ds * 2.0 * wx;
            cot_vy[(i, j)] += scale * weights.beta * ds * 2.0 * wy;
        }

        let flow = gt + v[(i, 0)] * gx + v[(i, 1)] * gy;
        a_sum += smooth_sqrt(flow * flow, eps);
        // d|flow|/dflow with the same smoothing.
        let da = smooth_sqrt_dds(flow * flow, eps) * 2.0 * flow;
        let g = scale * weights.gamma * da;
        cot_ut[(i, 0)] += g;
        cot_ux[(i, 0)] += g * v[(i, 0)];
        cot_uy[(i, 0)] += g * v[(i, 1)];
        cot_v[(i, 0)] += g * gx;
        cot_v[(i, 1)] += g * gy;
    }

    let zero_u = Array2::zeros((n, 1));
    let grad_u = u_field.backward(
        &u_trace,
        &zero_u,
        [Some(&cot_ux), Some(&cot_uy), Some(&cot_ut)],
    );
    let grad_v = v_field.backward(&v_trace, &cot_v, [Some(&cot_vx), Some(&cot_vy), None]);

    let value = scale * (weights.alpha * r_sum + weights.beta * s_sum + weights.gamma * a_sum);
    let raw = (scale * r_sum, scale * s_sum, scale * a_sum);
    (value, raw, grad_u, grad_v)
}

/// Value and parameter gradient of the mini-batch data fidelity. The
/// cotangent of the rasterized frame is `(1/N_B) K^T (K u - f)`, pushed
/// through a value-only backward sweep.
pub(crate) fn data_fidelity_with_grads(
    u_field: &NeuralField,
    sinogram: &Sinogram,
    projector: &FrameProjector,
    frame_indices: &[usize],
    pixel_centers: &[(f64, f64)],
) -> (f64, MlpParams) {
    let inv_batch = 1.0 / frame_indices.len() as f64;
    let mut value = 0.0;
    let mut grads = MlpParams::zeros_like(&u_field.params);
    let n_pix = pixel_centers.len();
    let mut measured = vec![0.0; sinogram.n_sensors()];
    let mut cot_pixels = vec![0.0; n_pix];
    for &i in frame_indices {
        let t = sinogram.times[i];
        let points: Vec<[f64; 3]> = pixel_centers.iter().map(|&(x, y)| [x, y, t]).collect();
        let trace = u_field.forward(&points, [false; 3]);
        projector.project(i, trace.out.as_slice().unwrap(), &mut measured);
        let f = sinogram.frame(i);
        let mut residual = measured.clone();
        for (r, fv) in residual.iter_mut().zip(f.iter()) {
            *r -= fv;
        }
        value += 0.5 * inv_batch * residual.iter().map(|r| r * r).sum::<f64>();
        cot_pixels.fill(0.0);
        projector.backproject_add(i, &residual, &mut cot_pixels);
        let cot =
            Array2::from_shape_fn((n_pix, 1), |(p, _)| inv_batch * cot_pixels[p]);
        grads.add_scaled(&u_field.backward(&trace, &cot, [None, None, None]), 1.0);
    }
    (value, grads)
}
