//! Time-indexed fan-beam measurements.

use crate::error::{Error, Result};
use crate::geom::FanBeamGeometry;
use ndarray::{Array2, ArrayView1};

/// Measurement matrix `f` with one column per acquisition time: entry
/// `(j, i)` is the line integral seen by sensor `j+1` at frame `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    /// `n_sensors x n_frames`.
    pub data: Array2<f64>,
    /// Source angle per frame (radians).
    pub angles: Vec<f64>,
    /// Acquisition time per frame.
    pub times: Vec<f64>,
    pub geometry: FanBeamGeometry,
}

impl Sinogram {
    pub fn new(
        data: Array2<f64>,
        angles: Vec<f64>,
        times: Vec<f64>,
        geometry: FanBeamGeometry,
    ) -> Result<Self> {
        if data.nrows() != geometry.n_sensors {
            return Err(Error::Shape(format!(
                "sinogram has {} rows but geometry has {} sensors",
                data.nrows(),
                geometry.n_sensors
            )));
        }
        if data.ncols() != angles.len() || data.ncols() != times.len() {
            return Err(Error::Shape(format!(
                "sinogram has {} columns but {} angles / {} times",
                data.ncols(),
                angles.len(),
                times.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sinogram data".into()));
        }
        Ok(Self { data, angles, times, geometry })
    }

    pub fn n_frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_sensors(&self) -> usize {
        self.data.nrows()
    }

    /// Measurement vector of frame `i`.
    pub fn frame(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.column(i)
    }
}
