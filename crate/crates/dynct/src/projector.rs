//! Exact-length fan-beam line-integral operator and its adjoint.
//!
//! Rays are the segments from the source point to each sensor center,
//! traversed with Siddon-style parametric grid crossings so that every
//! pixel contributes its exact intersection length. The adjoint is the
//! literal transpose of the same segment list, which is what PDHG and the
//! gradient checks require.

use crate::error::{Error, Result};
use crate::geom::{FanBeamGeometry, ImageGrid};
use crate::sinogram::Sinogram;
use crate::volume::CasoratiImage;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// One pixel crossed by a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySegment {
    /// Row-major pixel index.
    pub cell: usize,
    /// Intersection length in domain units.
    pub length: f64,
}

fn check_source_outside(geom: &FanBeamGeometry, grid: &ImageGrid, angle: f64) -> Result<()> {
    let (sx, sy) = geom.source(angle);
    if grid.contains(sx, sy) {
        return Err(Error::Geometry(format!(
            "source at ({sx:.3}, {sy:.3}) lies inside the grid extent"
        )));
    }
    Ok(())
}

/// Exact traversal of the segment source -> sensor through the grid.
///
/// Segments are ordered along the ray; the list is empty when the ray
/// misses the grid entirely.
pub fn ray_path(
    geom: &FanBeamGeometry,
    grid: &ImageGrid,
    angle: f64,
    sensor: usize,
) -> Result<Vec<RaySegment>> {
    if sensor < 1 || sensor > geom.n_sensors {
        return Err(Error::Config(format!(
            "sensor index {sensor} out of range 1..={}",
            geom.n_sensors
        )));
    }
    check_source_outside(geom, grid, angle)?;
    let src = geom.source(angle);
    let dst = geom.sensor_position(angle, sensor);
    Ok(trace_segment(grid, src, dst))
}

/// Siddon traversal of the segment `p0 -> p1`, clipped to the grid.
pub(crate) fn trace_segment(grid: &ImageGrid, p0: (f64, f64), p1: (f64, f64)) -> Vec<RaySegment> {
    let (x0, x1, y0, y1) = grid.extent;
    let (sx, sy) = p0;
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return Vec::new();
    }

    // Clip the parameter range [0,1] against the extent slabs.
    let mut a_min = 0.0f64;
    let mut a_max = 1.0f64;
    for (s, d, lo, hi) in [(sx, dx, x0, x1), (sy, dy, y0, y1)] {
        if d == 0.0 {
            if s <= lo || s >= hi {
                return Vec::new();
            }
        } else {
            let (mut a, mut b) = ((lo - s) / d, (hi - s) / d);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            a_min = a_min.max(a);
            a_max = a_max.min(b);
        }
    }
    if a_min >= a_max {
        return Vec::new();
    }

    // All crossings with the vertical and horizontal cell boundaries,
    // merged into one sorted list of parameter values.
    let hx = grid.pixel_width();
    let hy = grid.pixel_height();
    let mut alphas = Vec::with_capacity(grid.nx + grid.ny + 2);
    alphas.push(a_min);
    alphas.push(a_max);
    if dx != 0.0 {
        for i in 0..=grid.nx {
            let a = (x0 + i as f64 * hx - sx) / dx;
            if a > a_min && a < a_max {
                alphas.push(a);
            }
        }
    }
    if dy != 0.0 {
        for i in 0..=grid.ny {
            let a = (y0 + i as f64 * hy - sy) / dy;
            if a > a_min && a < a_max {
                alphas.push(a);
            }
        }
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut segments = Vec::with_capacity(alphas.len());
    let eps = 1e-14 * (a_max - a_min).max(1.0);
    for w in alphas.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= eps {
            continue; // corner crossing, zero-length interval
        }
        let am = 0.5 * (a + b);
        let px = sx + am * dx;
        let py = sy + am * dy;
        let ix = (((px - x0) / hx).floor() as isize).clamp(0, grid.nx as isize - 1) as usize;
        let iy = (((py - y0) / hy).floor() as isize).clamp(0, grid.ny as isize - 1) as usize;
        segments.push(RaySegment { cell: iy * grid.nx + ix, length: (b - a) * len });
    }
    segments
}

/// Forward-project one frame: `f_j = sum over ray-j segments of length * image[cell]`.
pub fn project_frame(
    image: &[f64],
    geom: &FanBeamGeometry,
    grid: &ImageGrid,
    angle: f64,
) -> Result<Vec<f64>> {
    check_source_outside(geom, grid, angle)?;
    if image.len() != grid.n_pixels() {
        return Err(Error::Shape(format!(
            "image has {} values, grid expects {}",
            image.len(),
            grid.n_pixels()
        )));
    }
    let src = geom.source(angle);
    let mut out = vec![0.0; geom.n_sensors];
    for (j, slot) in out.iter_mut().enumerate() {
        let dst = geom.sensor_position(angle, j + 1);
        *slot = trace_segment(grid, src, dst)
            .iter()
            .map(|s| s.length * image[s.cell])
            .sum();
    }
    Ok(out)
}

/// Exact transpose of [`project_frame`]: pixel `p` accumulates
/// `sum_j length(j, p) * measurement[j]`.
pub fn backproject_frame(
    measurement: &[f64],
    geom: &FanBeamGeometry,
    grid: &ImageGrid,
    angle: f64,
) -> Result<Vec<f64>> {
    check_source_outside(geom, grid, angle)?;
    if measurement.len() != geom.n_sensors {
        return Err(Error::Shape(format!(
            "measurement has {} values, geometry has {} sensors",
            measurement.len(),
            geom.n_sensors
        )));
    }
    let src = geom.source(angle);
    let mut out = vec![0.0; grid.n_pixels()];
    for (j, &m) in measurement.iter().enumerate() {
        for seg in trace_segment(grid, src, geom.sensor_position(angle, j + 1)) {
            out[seg.cell] += seg.length * m;
        }
    }
    Ok(out)
}

/// Project every frame of `u` at the template's angles, producing a
/// sinogram with the template's metadata.
pub fn project_spacetime(u: &CasoratiImage, template: &Sinogram) -> Result<Sinogram> {
    if u.n_frames() != template.n_frames() {
        return Err(Error::Shape(format!(
            "volume has {} frames, sinogram template has {}",
            u.n_frames(),
            template.n_frames()
        )));
    }
    let geom = template.geometry;
    let mut data = Array2::zeros((geom.n_sensors, template.n_frames()));
    for i in 0..template.n_frames() {
        let col = project_frame(
            u.frame(i).as_slice().unwrap(),
            &geom,
            &u.grid,
            template.angles[i],
        )?;
        data.column_mut(i).assign(&ndarray::ArrayView1::from(&col));
    }
    Sinogram::new(data, template.angles.clone(), template.times.clone(), geom)
}

/// A linear map with an available adjoint, as needed by the power method
/// and the PDHG solvers.
pub trait LinearOperator {
    fn domain_dim(&self) -> usize;
    fn range_dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]);
}

/// Power-method estimate of the largest singular value.
///
/// The Rayleigh quotient of `A^T A` is monotone non-decreasing across
/// iterations; a zero operator returns 0.
pub fn operator_norm(op: &dyn LinearOperator, n_iters: usize, seed: u64) -> f64 {
    let n = op.domain_dim();
    let m = op.range_dim();
    if n == 0 || m == 0 {
        return 0.0;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mut y = vec![0.0; m];
    let mut z = vec![0.0; n];
    let mut sigma = 0.0;
    for _ in 0..n_iters {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        op.apply(&x, &mut y);
        op.apply_adjoint(&y, &mut z);
        // Rayleigh quotient <x, A^T A x> = ||A x||^2 with ||x|| = 1.
        sigma = norm2(&y);
        std::mem::swap(&mut x, &mut z);
    }
    sigma
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Fan-beam projector over a fixed angle list with precomputed ray paths,
/// acting on whole Casorati volumes. This is the `K` block used by both
/// reconstruction methods.
pub struct FrameProjector {
    pub geom: FanBeamGeometry,
    pub grid: ImageGrid,
    pub angles: Vec<f64>,
    rays: Vec<Vec<Vec<RaySegment>>>, // [frame][sensor] -> segments
}

impl FrameProjector {
    pub fn new(geom: FanBeamGeometry, grid: ImageGrid, angles: Vec<f64>) -> Result<Self> {
        let mut rays = Vec::with_capacity(angles.len());
        for &angle in &angles {
            check_source_outside(&geom, &grid, angle)?;
            let src = geom.source(angle);
            let frame_rays = (1..=geom.n_sensors)
                .map(|j| trace_segment(&grid, src, geom.sensor_position(angle, j)))
                .collect();
            rays.push(frame_rays);
        }
        Ok(Self { geom, grid, angles, rays })
    }

    pub fn n_frames(&self) -> usize {
        self.angles.len()
    }

    /// Project frame `i` of a flat image slice.
    pub fn project(&self, frame: usize, image: &[f64], out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.rays[frame][j]
                .iter()
                .map(|s| s.length * image[s.cell])
                .sum();
        }
    }

    /// Transpose of [`FrameProjector::project`], accumulating into `out`.
    pub fn backproject_add(&self, frame: usize, measurement: &[f64], out: &mut [f64]) {
        for (j, &m) in measurement.iter().enumerate() {
            for seg in &self.rays[frame][j] {
                out[seg.cell] += seg.length * m;
            }
        }
    }
}

impl LinearOperator for FrameProjector {
    fn domain_dim(&self) -> usize {
        self.n_frames() * self.grid.n_pixels()
    }

    fn range_dim(&self) -> usize {
        self.n_frames() * self.geom.n_sensors
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        let m = self.geom.n_sensors;
        for i in 0..self.n_frames() {
            self.project(i, &x[i * n..(i + 1) * n], &mut out[i * m..(i + 1) * m]);
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let n = self.grid.n_pixels();
        let m = self.geom.n_sensors;
        out.fill(0.0);
        for i in 0..self.n_frames() {
            self.backproject_add(i, &y[i * m..(i + 1) * m], &mut out[i * n..(i + 1) * n]);
        }
    }
}
