//! PDHG solvers for the two convex subproblems and the biconvex
//! alternation driving them.
//!
//! Both subproblems have the shape `min_x sum_i g_i(A_i x)` with proximable
//! `g_i`, solved by the unaccelerated primal-dual iteration
//!
//! ```text
//! q_i <- prox_{sigma g_i*}(q_i + sigma A_i xbar)
//! x+  <- x - tau sum_i A_i^T q_i
//! xbar <- 2 x+ - x
//! ```
//!
//! with tau = sigma = 0.99 / L and L estimated by the power method on the
//! stacked operator, so tau sigma L^2 <= 1 holds.

use super::{grad_space, grad_space_adjoint, grad_time, grad_time_adjoint, project_l2ball_rows};
use crate::error::{Error, Result};
use crate::geom::ImageGrid;
use crate::projector::{operator_norm, FrameProjector, LinearOperator};
use crate::sinogram::Sinogram;
use crate::volume::{CasoratiImage, VelocityGrid};
use ndarray::{Array1, Array2};

/// Regularization weights and the common discretization scale
/// c = |Omega_T| / (N_T N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// One dualized term `g_i(A_i x)` of a PDHG problem.
trait DualBlock {
    fn range_dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint_add(&self, q: &[f64], out: &mut [f64]);
    /// In-place prox of `sigma g_i*` evaluated at the current buffer.
    fn prox_dual(&self, q: &mut [f64], sigma: f64);
    /// Exact feasibility check of a dual iterate (used by tests).
    fn dual_feasible(&self, q: &[f64]) -> bool;
}

/// Data block: z = K x stacked over frames, g(z) = (lambda/2)||z - f||^2.
struct DataBlock<'a> {
    projector: &'a FrameProjector,
    f: Vec<f64>,
    lambda: f64,
}

impl DualBlock for DataBlock<'_> {
    fn range_dim(&self) -> usize {
        self.projector.range_dim()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.projector.apply(x, out);
    }
    fn apply_adjoint_add(&self, q: &[f64], out: &mut [f64]) {
        let n = self.projector.grid.n_pixels();
        let m = self.projector.geom.n_sensors;
        for i in 0..self.projector.n_frames() {
            self.projector
                .backproject_add(i, &q[i * m..(i + 1) * m], &mut out[i * n..(i + 1) * n]);
        }
    }
    fn prox_dual(&self, q: &mut [f64], sigma: f64) {
        let scale = 1.0 / (1.0 + sigma / self.lambda);
        for (qi, fi) in q.iter_mut().zip(&self.f) {
            *qi = (*qi - sigma * fi) * scale;
        }
    }
    fn dual_feasible(&self, _q: &[f64]) -> bool {
        true // quadratic conjugate has full domain
    }
}

/// Spatial-TV block on a stack of frames: z = D x, g = radius * ||.||_{2,1}.
struct TvBlock {
    grid: ImageGrid,
    n_frames: usize,
    radius: f64,
}

impl DualBlock for TvBlock {
    fn range_dim(&self) -> usize {
        self.n_frames * self.grid.n_pixels() * 2
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        for i in 0..self.n_frames {
            let frame = ndarray::ArrayView1::from(&x[i * n..(i + 1) * n]);
            let g = grad_space(frame, &self.grid);
            out[i * 2 * n..(i + 1) * 2 * n].copy_from_slice(g.as_slice().unwrap());
        }
    }
    fn apply_adjoint_add(&self, q: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        for i in 0..self.n_frames {
            let qi = ndarray::ArrayView2::from_shape((n, 2), &q[i * 2 * n..(i + 1) * 2 * n])
                .expect("contiguous dual slice");
            let a = grad_space_adjoint(qi, &self.grid);
            for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(a.iter()) {
                *o += v;
            }
        }
    }
    fn prox_dual(&self, q: &mut [f64], _sigma: f64) {
        let n = self.grid.n_pixels();
        for i in 0..self.n_frames {
            let mut qi = Array2::from_shape_vec((n, 2), q[i * 2 * n..(i + 1) * 2 * n].to_vec())
                .expect("contiguous dual slice");
            project_l2ball_rows(&mut qi, self.radius);
            q[i * 2 * n..(i + 1) * 2 * n].copy_from_slice(qi.as_slice().unwrap());
        }
    }
    fn dual_feasible(&self, q: &[f64]) -> bool {
        q.chunks(2)
            .all(|c| (c[0] * c[0] + c[1] * c[1]).sqrt() <= self.radius + 1e-12)
    }
}

/// Flow block of the u-problem: z = D_t u + v . D u (linear in u),
/// g = bound * ||.||_1 dualized to a clamp.
struct FlowBlockU<'a> {
    grid: ImageGrid,
    n_frames: usize,
    dt: f64,
    v: &'a VelocityGrid,
    bound: f64,
}

impl DualBlock for FlowBlockU<'_> {
    fn range_dim(&self) -> usize {
        self.n_frames * self.grid.n_pixels()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        let nt = self.n_frames;
        let inv_dt = if nt > 1 { 1.0 / self.dt } else { 0.0 };
        for i in 0..nt {
            let frame = ndarray::ArrayView1::from(&x[i * n..(i + 1) * n]);
            let g = grad_space(frame, &self.grid);
            for p in 0..n {
                let time_diff = if i + 1 < nt {
                    (x[(i + 1) * n + p] - x[i * n + p]) * inv_dt
                } else {
                    0.0
                };
                out[i * n + p] = time_diff
                    + self.v.values[(i, p, 0)] * g[(p, 0)]
                    + self.v.values[(i, p, 1)] * g[(p, 1)];
            }
        }
    }
    fn apply_adjoint_add(&self, q: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        let nt = self.n_frames;
        // D_t^T part.
        let qm = Array2::from_shape_vec((nt, n), q.to_vec()).expect("contiguous dual");
        let dt_adj = grad_time_adjoint(&qm, self.dt);
        for (o, v) in out.iter_mut().zip(dt_adj.iter()) {
            *o += v;
        }
        // (v . D)^T part: D^T applied to v-weighted duals per frame.
        for i in 0..nt {
            let weighted = Array2::from_shape_fn((n, 2), |(p, k)| {
                self.v.values[(i, p, k)] * q[i * n + p]
            });
            let a = grad_space_adjoint(weighted.view(), &self.grid);
            for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(a.iter()) {
                *o += v;
            }
        }
    }
    fn prox_dual(&self, q: &mut [f64], _sigma: f64) {
        for v in q.iter_mut() {
            *v = v.clamp(-self.bound, self.bound);
        }
    }
    fn dual_feasible(&self, q: &[f64]) -> bool {
        q.iter().all(|v| v.abs() <= self.bound + 1e-15)
    }
}

/// TV block acting on one component of the interleaved velocity vector.
struct TvComponentBlock {
    grid: ImageGrid,
    n_frames: usize,
    component: usize,
    radius: f64,
}

impl DualBlock for TvComponentBlock {
    fn range_dim(&self) -> usize {
        self.n_frames * self.grid.n_pixels() * 2
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        for i in 0..self.n_frames {
            let frame: Array1<f64> =
                (0..n).map(|p| x[(i * n + p) * 2 + self.component]).collect();
            let g = grad_space(frame.view(), &self.grid);
            out[i * 2 * n..(i + 1) * 2 * n].copy_from_slice(g.as_slice().unwrap());
        }
    }
    fn apply_adjoint_add(&self, q: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        for i in 0..self.n_frames {
            let qi = ndarray::ArrayView2::from_shape((n, 2), &q[i * 2 * n..(i + 1) * 2 * n])
                .expect("contiguous dual slice");
            let a = grad_space_adjoint(qi, &self.grid);
            for p in 0..n {
                out[(i * n + p) * 2 + self.component] += a[p];
            }
        }
    }
    fn prox_dual(&self, q: &mut [f64], _sigma: f64) {
        let n = self.grid.n_pixels();
        for i in 0..self.n_frames {
            let mut qi = Array2::from_shape_vec((n, 2), q[i * 2 * n..(i + 1) * 2 * n].to_vec())
                .expect("contiguous dual slice");
            project_l2ball_rows(&mut qi, self.radius);
            q[i * 2 * n..(i + 1) * 2 * n].copy_from_slice(qi.as_slice().unwrap());
        }
    }
    fn dual_feasible(&self, q: &[f64]) -> bool {
        q.chunks(2)
            .all(|c| (c[0] * c[0] + c[1] * c[1]).sqrt() <= self.radius + 1e-12)
    }
}

/// Flow block of the v-problem: the pointwise affine map
/// z = rho + g1 v1 + g2 v2 with g = bound * ||.||_1; the offset rho enters
/// through the dual prox.
struct FlowBlockV {
    rho: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    bound: f64,
}

impl DualBlock for FlowBlockV {
    fn range_dim(&self) -> usize {
        self.rho.len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.g1[p] * x[2 * p] + self.g2[p] * x[2 * p + 1];
        }
    }
    fn apply_adjoint_add(&self, q: &[f64], out: &mut [f64]) {
        for (p, &qp) in q.iter().enumerate() {
            out[2 * p] += self.g1[p] * qp;
            out[2 * p + 1] += self.g2[p] * qp;
        }
    }
    fn prox_dual(&self, q: &mut [f64], sigma: f64) {
        // prox of sigma * (bound ||. + rho||_1)^* is a shifted clamp.
        for (p, v) in q.iter_mut().enumerate() {
            *v = (*v + sigma * self.rho[p]).clamp(-self.bound, self.bound);
        }
    }
    fn dual_feasible(&self, q: &[f64]) -> bool {
        q.iter().all(|v| v.abs() <= self.bound + 1e-15)
    }
}

/// Stack of blocks viewed as one linear operator for the power method.
struct StackedOp<'a> {
    blocks: &'a [&'a dyn DualBlock],
    domain: usize,
}

impl LinearOperator for StackedOp<'_> {
    fn domain_dim(&self) -> usize {
        self.domain
    }
    fn range_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.range_dim()).sum()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut offset = 0;
        for b in self.blocks {
            let r = b.range_dim();
            b.apply(x, &mut out[offset..offset + r]);
            offset += r;
        }
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut offset = 0;
        for b in self.blocks {
            let r = b.range_dim();
            b.apply_adjoint_add(&y[offset..offset + r], out);
            offset += r;
        }
    }
}

/// Primal/dual iterates of one PDHG run; duals persist across alternation
/// rounds for warm starting.
#[derive(Debug, Clone, PartialEq)]
pub struct PdhgState {
    pub primal: Vec<f64>,
    pub duals: Vec<Vec<f64>>,
    pub extrapolated: Vec<f64>,
    pub tau: f64,
    pub sigma: f64,
    pub operator_norm: f64,
    pub iterations: usize,
}

impl PdhgState {
    fn validate(&self) -> Result<()> {
        if self.tau * self.sigma * self.operator_norm * self.operator_norm > 1.0 + 1e-12 {
            return Err(Error::StepSize {
                tau: self.tau,
                sigma: self.sigma,
                norm: self.operator_norm,
            });
        }
        Ok(())
    }
}

const POWER_ITERS: usize = 100;
const STEP_SAFETY: f64 = 0.99;

fn run_pdhg(
    blocks: &[&dyn DualBlock],
    state: &mut PdhgState,
    n_iters: usize,
) -> Result<()> {
    state.validate()?;
    let n = state.primal.len();
    let (tau, sigma) = (state.tau, state.sigma);
    let mut ax = Vec::with_capacity(blocks.len());
    for b in blocks {
        ax.push(vec![0.0; b.range_dim()]);
    }
    let mut descent = vec![0.0; n];
    for _ in 0..n_iters {
        for (b, (q, buf)) in blocks
            .iter()
            .zip(state.duals.iter_mut().zip(ax.iter_mut()))
        {
            b.apply(&state.extrapolated, buf);
            for (qi, ai) in q.iter_mut().zip(buf.iter()) {
                *qi += sigma * ai;
            }
            b.prox_dual(q, sigma);
            debug_assert!(b.dual_feasible(q), "dual left its feasible set");
        }
        descent.fill(0.0);
        for (b, q) in blocks.iter().zip(state.duals.iter()) {
            b.apply_adjoint_add(q, &mut descent);
        }
        for p in 0..n {
            let new = state.primal[p] - tau * descent[p];
            state.extrapolated[p] = 2.0 * new - state.primal[p];
            state.primal[p] = new;
        }
        state.iterations += 1;
    }
    Ok(())
}

fn fresh_state(blocks: &[&dyn DualBlock], x0: Vec<f64>, norm_seed: u64) -> PdhgState {
    let stacked = StackedOp { blocks, domain: x0.len() };
    let norm = operator_norm(&stacked, POWER_ITERS, norm_seed);
    let step = if norm > 0.0 { STEP_SAFETY / norm } else { 1.0 };
    PdhgState {
        duals: blocks.iter().map(|b| vec![0.0; b.range_dim()]).collect(),
        extrapolated: x0.clone(),
        primal: x0,
        tau: step,
        sigma: step,
        operator_norm: norm,
        iterations: 0,
    }
}

fn discretization_scale(u: &CasoratiImage) -> f64 {
    let g = &u.grid;
    let volume = (g.extent.1 - g.extent.0) * (g.extent.3 - g.extent.2) * u.time_axis.t_final;
    volume / (u.n_frames() * g.n_pixels()) as f64
}

/// Solve the u-subproblem
/// `min_u D(u, f) + alpha R(u) + gamma A(D_t u + v . D u)` by PDHG with
/// `v` frozen. Warm-starts from `state` when given; returns the updated
/// state for the next round.
pub fn pdhg_u(
    u0: &CasoratiImage,
    v: &VelocityGrid,
    sinogram: &Sinogram,
    projector: &FrameProjector,
    weights: &GridWeights,
    n_iters: usize,
    state: Option<PdhgState>,
) -> Result<(CasoratiImage, PdhgState)> {
    let nt = u0.n_frames();
    let c = discretization_scale(u0);

    let data = DataBlock {
        projector,
        f: sinogram.data.t().iter().copied().collect(), // frame-major stack
        lambda: 1.0 / nt as f64,
    };
    let tv = TvBlock { grid: u0.grid, n_frames: nt, radius: weights.alpha * c };
    let flow = FlowBlockU {
        grid: u0.grid,
        n_frames: nt,
        dt: u0.time_axis.dt(),
        v,
        bound: weights.gamma * c,
    };

    let mut blocks: Vec<&dyn DualBlock> = vec![&data];
    if weights.alpha > 0.0 {
        blocks.push(&tv);
    }
    if weights.gamma > 0.0 {
        blocks.push(&flow);
    }

    let mut state = match state {
        Some(s) => s,
        None => fresh_state(&blocks, u0.values.iter().copied().collect(), 71),
    };
    run_pdhg(&blocks, &mut state, n_iters)?;

    let values = Array2::from_shape_vec((nt, u0.grid.n_pixels()), state.primal.clone())
        .expect("primal has volume shape");
    Ok((
        CasoratiImage { values, grid: u0.grid, time_axis: u0.time_axis.clone() },
        state,
    ))
}

/// Solve the v-subproblem
/// `min_v beta S(v) + gamma A(rho + g . v)` by PDHG with `u` frozen
/// (`rho = D_t u`, `g = D u`).
pub fn pdhg_v(
    v0: &VelocityGrid,
    u: &CasoratiImage,
    weights: &GridWeights,
    n_iters: usize,
    state: Option<PdhgState>,
) -> Result<(VelocityGrid, PdhgState)> {
    let nt = u.n_frames();
    let n = u.grid.n_pixels();
    let c = discretization_scale(u);

    let dtu = grad_time(u);
    let du = super::grad_space_all(u);
    let flow = FlowBlockV {
        rho: dtu.iter().copied().collect(),
        g1: (0..nt * n).map(|k| du[(k / n, k % n, 0)]).collect(),
        g2: (0..nt * n).map(|k| du[(k / n, k % n, 1)]).collect(),
        bound: weights.gamma * c,
    };
    let tv1 = TvComponentBlock { grid: u.grid, n_frames: nt, component: 0, radius: weights.beta * c };
    let tv2 = TvComponentBlock { grid: u.grid, n_frames: nt, component: 1, radius: weights.beta * c };

    let mut blocks: Vec<&dyn DualBlock> = Vec::new();
    if weights.beta > 0.0 {
        blocks.push(&tv1);
        blocks.push(&tv2);
    }
    if weights.gamma > 0.0 {
        blocks.push(&flow);
    }
    if blocks.is_empty() {
        // Nothing to minimize; keep v0.
        let state = PdhgState {
            primal: v0.values.iter().copied().collect(),
            duals: Vec::new(),
            extrapolated: v0.values.iter().copied().collect(),
            tau: 1.0,
            sigma: 1.0,
            operator_norm: 0.0,
            iterations: 0,
        };
        return Ok((v0.clone(), state));
    }

    // Interleaved primal layout: (frame, pixel, component).
    let mut state = match state {
        Some(s) => s,
        None => fresh_state(&blocks, v0.values.iter().copied().collect(), 73),
    };
    run_pdhg(&blocks, &mut state, n_iters)?;

    let values =
        ndarray::Array3::from_shape_vec((nt, n, 2), state.primal.clone()).expect("volume shape");
    Ok((
        VelocityGrid { values, grid: u.grid, time_axis: u.time_axis.clone() },
        state,
    ))
}

/// Objective value of the discretized joint problem.
pub fn joint_objective(
    u: &CasoratiImage,
    v: &VelocityGrid,
    sinogram: &Sinogram,
    projector: &FrameProjector,
    weights: &GridWeights,
) -> f64 {
    let nt = u.n_frames();
    let mut measured = vec![0.0; sinogram.n_sensors()];
    let mut data = 0.0;
    for i in 0..nt {
        projector.project(i, u.frame(i).as_slice().unwrap(), &mut measured);
        data += 0.5
            * measured
                .iter()
                .zip(sinogram.frame(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
    }
    data /= nt as f64;
    let (r, s, a) = super::discrete_regularizers(u, v);
    data + weights.alpha * r + weights.beta * s + weights.gamma * a
}

/// Per-round log of the alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternateLog {
    pub objectives: Vec<f64>,
}

/// Alternate the two PDHG subproblems with warm-started duals. Round 1
/// solves for u with `v0` (zero velocity by default) frozen.
#[allow(clippy::too_many_arguments)]
pub fn alternate(
    u0: &CasoratiImage,
    v0: &VelocityGrid,
    sinogram: &Sinogram,
    weights: &GridWeights,
    rounds: usize,
    inner_iters: usize,
) -> Result<(CasoratiImage, VelocityGrid, AlternateLog)> {
    let projector = FrameProjector::new(sinogram.geometry, u0.grid, sinogram.angles.clone())?;
    let mut u = u0.clone();
    let mut v = v0.clone();
    let mut state_u: Option<PdhgState> = None;
    let mut state_v: Option<PdhgState> = None;
    let mut log = AlternateLog {
        objectives: vec![joint_objective(&u, &v, sinogram, &projector, weights)],
    };
    for _ in 0..rounds {
        // The u-operator depends on the current v, so its norm and duals
        // are rebuilt when v changed; warm-start only the compatible part.
        let (u_next, su) = pdhg_u(&u, &v, sinogram, &projector, weights, inner_iters, state_u)?;
        u = u_next;
        let (v_next, sv) = pdhg_v(&v, &u, weights, inner_iters, state_v)?;
        v = v_next;
        state_u = Some(refresh_u_state(su, &u, &v, sinogram, &projector, weights));
        state_v = Some(sv);
        log.objectives
            .push(joint_objective(&u, &v, sinogram, &projector, weights));
    }
    Ok((u, v, log))
}

/// After v changes, the u-problem's flow operator (and hence its norm)
/// changes: recompute the step sizes but keep the dual iterates as warm
/// starts.
fn refresh_u_state(
    mut state: PdhgState,
    u: &CasoratiImage,
    v: &VelocityGrid,
    sinogram: &Sinogram,
    projector: &FrameProjector,
    weights: &GridWeights,
) -> PdhgState {
    let nt = u.n_frames();
    let c = discretization_scale(u);
    let data = DataBlock {
        projector,
        f: sinogram.data.t().iter().copied().collect(),
        lambda: 1.0 / nt as f64,
    };
    let tv = TvBlock { grid: u.grid, n_frames: nt, radius: weights.alpha * c };
    let flow = FlowBlockU {
        grid: u.grid,
        n_frames: nt,
        dt: u.time_axis.dt(),
        v,
        bound: weights.gamma * c,
    };
    let mut blocks: Vec<&dyn DualBlock> = vec![&data];
    if weights.alpha > 0.0 {
        blocks.push(&tv);
    }
    if weights.gamma > 0.0 {
        blocks.push(&flow);
    }
    let stacked = StackedOp { blocks: &blocks, domain: state.primal.len() };
    let norm = operator_norm(&stacked, POWER_ITERS, 71);
    let step = if norm > 0.0 { STEP_SAFETY / norm } else { 1.0 };
    state.operator_norm = norm;
    state.tau = step;
    state.sigma = step;
    state.primal = u.values.iter().copied().collect();
    state.extrapolated = state.primal.clone();
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{FanBeamGeometry, SamplingSchedule, TimeAxis};
    use crate::phantom::{synthesize_sinogram, Phantom};

    fn single_frame_sinogram(
        n_sensors: usize,
        detector_width: f64,
        res: usize,
    ) -> (Sinogram, ImageGrid, FrameProjector) {
        let phantom = Phantom::two_square();
        let geom = FanBeamGeometry::new(3.0, 5.0, detector_width, n_sensors).unwrap();
        let axis = TimeAxis::new(1, 0.0).unwrap();
        let sched = SamplingSchedule::Sequential { delta: 0.7 };
        let sino = synthesize_sinogram(&phantom, &geom, &sched, &axis, 0.0, 0, 256).unwrap();
        let grid = ImageGrid::unit_square(res);
        let projector = FrameProjector::new(geom, grid, sino.angles.clone()).unwrap();
        (sino, grid, projector)
    }

    #[test]
    fn zero_data_zero_init_stays_zero() {
        let (mut sino, grid, projector) = single_frame_sinogram(8, 3.5, 4);
        sino.data.fill(0.0);
        let axis = TimeAxis::new(1, 0.0).unwrap();
        let u0 = CasoratiImage::zeros(grid, axis.clone());
        let v = VelocityGrid::zeros(grid, axis);
        let weights = GridWeights { alpha: 0.0, beta: 0.0, gamma: 0.0 };
        let (u, _) = pdhg_u(&u0, &v, &sino, &projector, &weights, 200, None).unwrap();
        assert!(u.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn least_squares_matches_pseudoinverse() {
        // alpha = gamma = 0 on a 4x4 grid: PDHG from zero converges to the
        // minimum-norm least-squares solution, i.e. pinv(K) f. A detector
        // wide enough to cover the grid corners keeps K decently
        // conditioned (cond ~ 22), which the convergence rate needs.
        let (sino, grid, projector) = single_frame_sinogram(48, 5.0, 4);
        let axis = TimeAxis::new(1, 0.0).unwrap();
        let u0 = CasoratiImage::zeros(grid, axis.clone());
        let v = VelocityGrid::zeros(grid, axis);
        let weights = GridWeights { alpha: 0.0, beta: 0.0, gamma: 0.0 };
        let (u, state) = pdhg_u(&u0, &v, &sino, &projector, &weights, 30_000, None).unwrap();
        assert!(state.tau * state.sigma * state.operator_norm.powi(2) <= 1.0 + 1e-12);

        // Dense K by projecting basis vectors.
        let n = grid.n_pixels();
        let m = sino.n_sensors();
        let mut k = nalgebra::DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            projector.project(0, &e, &mut col);
            for i in 0..m {
                k[(i, j)] = col[i];
            }
        }
        let f = nalgebra::DVector::from_iterator(m, sino.data.column(0).iter().copied());
        let pinv = k.clone().pseudo_inverse(1e-12).unwrap();
        let expect = pinv * f;
        let got = nalgebra::DVector::from_iterator(n, u.values.iter().copied());
        let rel = (&got - &expect).norm() / expect.norm();
        assert!(rel < 1e-6, "solution differs from pinv by rel {rel}");
    }

    #[test]
    fn tv_denoising_objective_near_long_run() {
        // 8x8 single-frame TV-L2 with K = identity realized by comparing
        // against a much longer run of the same instance.
        let grid = ImageGrid::unit_square(8);
        let axis = TimeAxis::new(1, 0.0).unwrap();
        // Noisy step image.
        let mut f = CasoratiImage::zeros(grid, axis.clone());
        for (p, &(x, _)) in grid.pixel_centers().iter().enumerate() {
            let mut v = if x > 0.0 { 1.0 } else { 0.2 };
            v += 0.1 * ((p * 2654435761) % 97) as f64 / 97.0 - 0.05;
            f.values[(0, p)] = v;
        }

        // Identity "projector" via an explicit block.
        struct IdBlock {
            f: Vec<f64>,
        }
        impl DualBlock for IdBlock {
            fn range_dim(&self) -> usize {
                self.f.len()
            }
            fn apply(&self, x: &[f64], out: &mut [f64]) {
                out.copy_from_slice(x);
            }
            fn apply_adjoint_add(&self, q: &[f64], out: &mut [f64]) {
                for (o, v) in out.iter_mut().zip(q) {
                    *o += v;
                }
            }
            fn prox_dual(&self, q: &mut [f64], sigma: f64) {
                for (qi, fi) in q.iter_mut().zip(&self.f) {
                    *qi = (*qi - sigma * fi) / (1.0 + sigma);
                }
            }
            fn dual_feasible(&self, _q: &[f64]) -> bool {
                true
            }
        }

        let alpha_c = 0.02; // effective TV radius
        let objective = |x: &[f64]| -> f64 {
            let frame = ndarray::ArrayView1::from(x);
            let g = grad_space(frame, &grid);
            let tv: f64 = super::super::norm21(g.view());
            let data: f64 = 0.5
                * x.iter()
                    .zip(f.values.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            data + alpha_c * tv
        };

        let run = |iters: usize| -> (Vec<f64>, bool) {
            let id = IdBlock { f: f.values.iter().copied().collect() };
            let tv = TvBlock { grid, n_frames: 1, radius: alpha_c };
            let blocks: Vec<&dyn DualBlock> = vec![&id, &tv];
            let mut state = fresh_state(&blocks, vec![0.0; 64], 7);
            run_pdhg(&blocks, &mut state, iters).unwrap();
            let feasible = blocks
                .iter()
                .zip(state.duals.iter())
                .all(|(b, q)| b.dual_feasible(q));
            (state.primal, feasible)
        };

        let (x_ref, _) = run(1_000_000);
        let (x, feasible) = run(100_000);
        assert!(feasible, "dual iterates left their feasible sets");
        let gap = objective(&x) - objective(&x_ref);
        assert!(
            gap.abs() < 1e-4,
            "objective gap {gap} after 1e5 iterations"
        );
    }

    #[test]
    fn v_problem_pointwise_prox_oracle() {
        // Single pixel, beta = 0: PDHG from w converges to the projection
        // of w onto the flow-feasible line, which is the first branch of
        // the closed-form prox of lambda |rho + g . v|.
        let grid = ImageGrid::unit_square(1);
        let axis = TimeAxis::new(1, 0.0).unwrap();
        let flow = FlowBlockV { rho: vec![1.0], g1: vec![1.0], g2: vec![0.0], bound: 2.0 };
        let blocks: Vec<&dyn DualBlock> = vec![&flow];
        let w = vec![0.0, 0.0];
        let mut state = fresh_state(&blocks, w.clone(), 3);
        run_pdhg(&blocks, &mut state, 20_000).unwrap();
        // Closed form: v = w - g (rho + g.w)/||g||^2 = (-1, 0).
        assert!((state.primal[0] + 1.0).abs() < 1e-6, "v1 = {}", state.primal[0]);
        assert!(state.primal[1].abs() < 1e-6, "v2 = {}", state.primal[1]);
        let _ = (grid, axis);
    }

    #[test]
    fn v_stays_zero_when_u_static() {
        let grid = ImageGrid::unit_square(4);
        let axis = TimeAxis::new(3, 1.0).unwrap();
        let mut u = CasoratiImage::zeros(grid, axis.clone());
        u.values.fill(0.5); // static and flat: rho = 0, g = 0
        let v0 = VelocityGrid::zeros(grid, axis);
        let weights = GridWeights { alpha: 0.0, beta: 1e-4, gamma: 1e-3 };
        let (v, _) = pdhg_v(&v0, &u, &weights, 500, None).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn alternation_decreases_objective() {
        let phantom = Phantom::two_square();
        let geom = FanBeamGeometry::new(3.0, 5.0, 3.5, 16).unwrap();
        let axis = TimeAxis::new(8, 1.0).unwrap();
        let sched = SamplingSchedule::Random { seed: 4 };
        let sino = synthesize_sinogram(&phantom, &geom, &sched, &axis, 0.005, 2, 128).unwrap();
        let grid = ImageGrid::unit_square(16);
        let u0 = CasoratiImage::zeros(grid, axis.clone());
        let v0 = VelocityGrid::zeros(grid, axis);
        let weights = GridWeights { alpha: 1e-3, beta: 1e-4, gamma: 1e-3 };
        let (_, _, log) = alternate(&u0, &v0, &sino, &weights, 3, 300).unwrap();
        let initial = log.objectives[0];
        for w in log.objectives.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6 * initial,
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn gamma_zero_decouples() {
        let phantom = Phantom::two_square();
        let geom = FanBeamGeometry::new(3.0, 5.0, 3.5, 8).unwrap();
        let axis = TimeAxis::new(4, 1.0).unwrap();
        let sched = SamplingSchedule::Random { seed: 6 };
        let sino = synthesize_sinogram(&phantom, &geom, &sched, &axis, 0.0, 0, 64).unwrap();
        let grid = ImageGrid::unit_square(8);
        let u0 = CasoratiImage::zeros(grid, axis.clone());
        let v0 = VelocityGrid::zeros(grid, axis);
        let weights = GridWeights { alpha: 1e-3, beta: 1e-4, gamma: 0.0 };
        let (_, v, _) = alternate(&u0, &v0, &sino, &weights, 2, 100).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }
}
