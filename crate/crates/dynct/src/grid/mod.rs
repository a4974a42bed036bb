//! Grid-based baseline: finite differences on the Casorati matrix,
//! discretized regularizers, proximal operators and the PDHG alternation.
//!
//! Spatial and temporal gradients are forward differences with Neumann
//! (replicate) boundaries, scaled by the grid spacing; adjoints are exact
//! transposes, which the solvers and the adjoint test suite rely on.

mod solver;

pub use solver::{alternate, pdhg_u, pdhg_v, AlternateLog, GridWeights, PdhgState};

use crate::geom::ImageGrid;
use crate::volume::{CasoratiImage, VelocityGrid};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};

/// Forward-difference spatial gradient of one frame (row-major pixels).
/// Output shape (n_pixels, 2); the last column/row get zero x/y gradients.
pub fn grad_space(frame: ArrayView1<'_, f64>, grid: &ImageGrid) -> Array2<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let inv_h = 1.0 / grid.pixel_size();
    let mut out = Array2::zeros((nx * ny, 2));
    for iy in 0..ny {
        for ix in 0..nx {
            let p = iy * nx + ix;
            if ix + 1 < nx {
                out[(p, 0)] = (frame[p + 1] - frame[p]) * inv_h;
            }
            if iy + 1 < ny {
                out[(p, 1)] = (frame[p + nx] - frame[p]) * inv_h;
            }
        }
    }
    out
}

/// Exact transpose of [`grad_space`].
pub fn grad_space_adjoint(q: ArrayView2<'_, f64>, grid: &ImageGrid) -> Array1<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let inv_h = 1.0 / grid.pixel_size();
    let mut out = Array1::zeros(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let p = iy * nx + ix;
            let mut acc = 0.0;
            if ix + 1 < nx {
                acc -= q[(p, 0)];
            }
            if ix > 0 {
                acc += q[(p - 1, 0)];
            }
            if iy + 1 < ny {
                acc -= q[(p, 1)];
            }
            if iy > 0 {
                acc += q[(p - nx, 1)];
            }
            out[p] = acc * inv_h;
        }
    }
    out
}

/// Negative adjoint of the spatial gradient.
pub fn div_space(q: ArrayView2<'_, f64>, grid: &ImageGrid) -> Array1<f64> {
    -grad_space_adjoint(q, grid)
}

/// Forward difference across frames scaled by 1/dt; the last frame row is
/// zero (Neumann).
pub fn grad_time(u: &CasoratiImage) -> Array2<f64> {
    let nt = u.n_frames();
    let n = u.values.ncols();
    let mut out = Array2::zeros((nt, n));
    if nt < 2 {
        return out;
    }
    let inv_dt = 1.0 / u.time_axis.dt();
    for i in 0..nt - 1 {
        for j in 0..n {
            out[(i, j)] = (u.values[(i + 1, j)] - u.values[(i, j)]) * inv_dt;
        }
    }
    out
}

/// Exact transpose of [`grad_time`] for a (n_frames x n_pixels) dual.
pub fn grad_time_adjoint(q: &Array2<f64>, dt: f64) -> Array2<f64> {
    let (nt, n) = q.dim();
    let mut out = Array2::zeros((nt, n));
    if nt < 2 {
        return out;
    }
    let inv_dt = 1.0 / dt;
    for i in 0..nt {
        for j in 0..n {
            let mut acc = 0.0;
            if i + 1 < nt {
                acc -= q[(i, j)];
            }
            if i > 0 {
                acc += q[(i - 1, j)];
            }
            out[(i, j)] = acc * inv_dt;
        }
    }
    out
}

/// Sum of per-pixel 2-norms of a (n, 2) vector field.
pub fn norm21(field: ArrayView2<'_, f64>) -> f64 {
    field
        .rows()
        .into_iter()
        .map(|r| (r[0] * r[0] + r[1] * r[1]).sqrt())
        .sum()
}

/// Discretized regularizer triple (R, S, A) with the common scale
/// c = |Omega_T| / (N_T N):
/// R = c sum_i ||(D u)_i||_{2,1},
/// S = c sum_i sum_j ||(D v_j)_i||_{2,1},
/// A = c sum_i ||(D_t u)_i + v_i . (D u)_i||_1.
pub fn discrete_regularizers(u: &CasoratiImage, v: &VelocityGrid) -> (f64, f64, f64) {
    let grid = &u.grid;
    let nt = u.n_frames();
    let n = grid.n_pixels();
    let volume =
        (grid.extent.1 - grid.extent.0) * (grid.extent.3 - grid.extent.2) * u.time_axis.t_final;
    let c = volume / (nt * n) as f64;

    let dt_u = grad_time(u);
    let mut r_sum = 0.0;
    let mut s_sum = 0.0;
    let mut a_sum = 0.0;
    for i in 0..nt {
        let du = grad_space(u.frame(i), grid);
        r_sum += norm21(du.view());
        // One TV term per velocity component.
        for j in 0..2 {
            let vj: Array1<f64> = (0..n).map(|p| v.values[(i, p, j)]).collect();
            s_sum += norm21(grad_space(vj.view(), grid).view());
        }
        for p in 0..n {
            let flow =
                dt_u[(i, p)] + v.values[(i, p, 0)] * du[(p, 0)] + v.values[(i, p, 1)] * du[(p, 1)];
            a_sum += flow.abs();
        }
    }
    (c * r_sum, c * s_sum, c * a_sum)
}

/// Spatial gradients of every frame stacked into (n_frames, n_pixels, 2).
pub fn grad_space_all(u: &CasoratiImage) -> Array3<f64> {
    let nt = u.n_frames();
    let n = u.grid.n_pixels();
    let mut out = Array3::zeros((nt, n, 2));
    for i in 0..nt {
        let g = grad_space(u.frame(i), &u.grid);
        out.index_axis_mut(ndarray::Axis(0), i).assign(&g);
    }
    out
}

/// Soft threshold: sign(x) max(|x| - tau, 0).
pub fn prox_soft_threshold(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Scale each per-pixel 2-vector to norm at most `r`.
pub fn project_l2ball_rows(q: &mut Array2<f64>, r: f64) {
    for mut row in q.rows_mut() {
        let norm = (row[0] * row[0] + row[1] * row[1]).sqrt();
        if norm > r {
            let s = r / norm;
            row[0] *= s;
            row[1] *= s;
        }
    }
}

/// Prox of the convex conjugate of `lambda/2 ||. - f||^2`:
/// `p -> (p - sigma f) / (1 + sigma / lambda)`.
pub fn prox_quad_conjugate(p: f64, sigma: f64, f: f64, lambda: f64) -> f64 {
    (p - sigma * f) / (1.0 + sigma / lambda)
}
