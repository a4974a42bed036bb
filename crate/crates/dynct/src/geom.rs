//! Scanner geometry, reconstruction grid, time axis and angle schedules.
//!
//! All types here are immutable after construction and shared by every
//! other module. Angles measure the source position counterclockwise from
//! the positive x-axis; the source sits at `dso * (cos t, sin t)` and the
//! detector line is centered on the ray through the origin at distance
//! `dsd` from the source, perpendicular to that ray.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Fan-beam scanner description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanBeamGeometry {
    /// Distance source -> origin (domain units).
    pub dso: f64,
    /// Distance source -> detector line (domain units).
    pub dsd: f64,
    /// Physical width of the detector line.
    pub detector_width: f64,
    /// Number of equispaced detector cells.
    pub n_sensors: usize,
}

impl FanBeamGeometry {
    pub fn new(dso: f64, dsd: f64, detector_width: f64, n_sensors: usize) -> Result<Self> {
        if !(dso > 0.0) {
            return Err(Error::Geometry(format!("dso must be positive, got {dso}")));
        }
        if !(dsd > dso) {
            return Err(Error::Geometry(format!("dsd ({dsd}) must exceed dso ({dso})")));
        }
        if !(detector_width > 0.0) {
            return Err(Error::Geometry(format!(
                "detector width must be positive, got {detector_width}"
            )));
        }
        if n_sensors == 0 {
            return Err(Error::Geometry("need at least one sensor".into()));
        }
        Ok(Self { dso, dsd, detector_width, n_sensors })
    }

    /// Preset used for the two-square and cardiac scenes: dso 3, dsd 5,
    /// detector width 3.5, 64 sensors.
    pub fn preset_two_square() -> Self {
        Self { dso: 3.0, dsd: 5.0, detector_width: 3.5, n_sensors: 64 }
    }

    /// STEMPO scanner scaled to the unit square: dso 9.88, dsd 13.33,
    /// detector width 2.69, 70 sensors.
    pub fn preset_stempo() -> Self {
        Self { dso: 9.88, dsd: 13.33, detector_width: 2.69, n_sensors: 70 }
    }

    /// XCAT preset: dso 6, dsd 8, detector width 3.5, 150 sensors.
    pub fn preset_xcat() -> Self {
        Self { dso: 6.0, dsd: 8.0, detector_width: 3.5, n_sensors: 150 }
    }

    /// Source position at angle `theta` (radians).
    pub fn source(&self, theta: f64) -> (f64, f64) {
        (self.dso * theta.cos(), self.dso * theta.sin())
    }

    /// Center of sensor cell `sensor` (1-based) at angle `theta`.
    ///
    /// Sensor j sits at detector offset ((j-1/2)/M - 1/2) * detector_width
    /// along the detector line, which is perpendicular to the central ray.
    pub fn sensor_position(&self, theta: f64, sensor: usize) -> (f64, f64) {
        debug_assert!(sensor >= 1 && sensor <= self.n_sensors);
        let (ct, st) = (theta.cos(), theta.sin());
        // Detector line center: source + dsd * (direction source -> origin).
        let cx = (self.dso - self.dsd) * ct;
        let cy = (self.dso - self.dsd) * st;
        let m = self.n_sensors as f64;
        let offset = ((sensor as f64 - 0.5) / m - 0.5) * self.detector_width;
        // Perpendicular to the central ray, counterclockwise.
        (cx - offset * st, cy + offset * ct)
    }
}

/// Uniform pixel grid over an axis-aligned rectangle, default [-1,1]^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    pub nx: usize,
    pub ny: usize,
    /// (x_min, x_max, y_min, y_max)
    pub extent: (f64, f64, f64, f64),
}

impl ImageGrid {
    /// Square grid on [-1,1]^2.
    pub fn unit_square(n: usize) -> Self {
        Self { nx: n, ny: n, extent: (-1.0, 1.0, -1.0, 1.0) }
    }

    pub fn new(nx: usize, ny: usize, extent: (f64, f64, f64, f64)) -> Result<Self> {
        let (x0, x1, y0, y1) = extent;
        if nx == 0 || ny == 0 {
            return Err(Error::Geometry("grid must have at least one pixel per axis".into()));
        }
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::Geometry(format!("empty extent {extent:?}")));
        }
        let g = Self { nx, ny, extent };
        let (hx, hy) = (g.pixel_width(), g.pixel_height());
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::Geometry(format!(
                "pixels must be square: width {hx} vs height {hy}"
            )));
        }
        Ok(g)
    }

    pub fn n_pixels(&self) -> usize {
        self.nx * self.ny
    }

    pub fn pixel_width(&self) -> f64 {
        (self.extent.1 - self.extent.0) / self.nx as f64
    }

    pub fn pixel_height(&self) -> f64 {
        (self.extent.3 - self.extent.2) / self.ny as f64
    }

    /// Side length of the (square) pixels.
    pub fn pixel_size(&self) -> f64 {
        self.pixel_width()
    }

    /// Center of the pixel in column `ix`, row `iy` (0-based).
    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.extent.0 + (ix as f64 + 0.5) * self.pixel_width(),
            self.extent.2 + (iy as f64 + 0.5) * self.pixel_height(),
        )
    }

    /// Row-major list of cell-center coordinates (rows scan y, columns x).
    pub fn pixel_centers(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.n_pixels());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(self.center(ix, iy));
            }
        }
        out
    }

    /// True if the point lies strictly inside the grid extent.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, x1, y0, y1) = self.extent;
        x > x0 && x < x1 && y > y0 && y < y1
    }
}

/// Uniform time axis t_i = (i-1) * T / (N_T - 1), with t_1 = 0, t_{N_T} = T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAxis {
    pub n_frames: usize,
    pub t_final: f64,
    times: Vec<f64>,
}

impl TimeAxis {
    pub fn new(n_frames: usize, t_final: f64) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::Geometry("time axis needs at least one frame".into()));
        }
        if !(t_final >= 0.0) || (n_frames > 1 && t_final == 0.0) {
            return Err(Error::Geometry(format!("invalid final time {t_final}")));
        }
        let times = if n_frames == 1 {
            vec![0.0]
        } else {
            (0..n_frames)
                .map(|i| i as f64 * t_final / (n_frames - 1) as f64)
                .collect()
        };
        Ok(Self { n_frames, t_final, times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, frame: usize) -> f64 {
        self.times[frame]
    }

    /// Spacing between consecutive frames (0 for a single frame).
    pub fn dt(&self) -> f64 {
        if self.n_frames > 1 {
            self.t_final / (self.n_frames - 1) as f64
        } else {
            0.0
        }
    }
}

/// How the source angle evolves over the acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingSchedule {
    /// One projection per frame along an i.i.d. uniform angle in [0, 2pi).
    Random { seed: u64 },
    /// Fixed angular increment between consecutive frames: theta_i = (i-1)*delta.
    Sequential { delta: f64 },
}

impl SamplingSchedule {
    /// Angle for every frame; deterministic given the schedule and `n_frames`.
    pub fn angles(&self, n_frames: usize) -> Result<Vec<f64>> {
        match *self {
            SamplingSchedule::Sequential { delta } => {
                if delta == 0.0 {
                    return Err(Error::Config("sequential schedule requires delta != 0".into()));
                }
                Ok((0..n_frames).map(|i| i as f64 * delta).collect())
            }
            SamplingSchedule::Random { seed } => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                Ok((0..n_frames)
                    .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
                    .collect())
            }
        }
    }
}

/// `angle_schedule(schedule, n)` as a free function, for symmetry with the
/// other module-level operations.
pub fn angle_schedule(schedule: &SamplingSchedule, n_frames: usize) -> Result<Vec<f64>> {
    schedule.angles(n_frames)
}
