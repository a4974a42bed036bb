//! Spatiotemporal image containers in Casorati layout (frames by pixels).

use crate::error::{Error, Result};
use crate::geom::{ImageGrid, TimeAxis};
use ndarray::{Array2, Array3, ArrayView1, ArrayViewMut1};

/// Rasterized spatiotemporal image: one row per frame, `nx*ny` pixels per
/// row in row-major order over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CasoratiImage {
    pub values: Array2<f64>,
    pub grid: ImageGrid,
    pub time_axis: TimeAxis,
}

impl CasoratiImage {
    pub fn new(values: Array2<f64>, grid: ImageGrid, time_axis: TimeAxis) -> Result<Self> {
        if values.nrows() != time_axis.n_frames || values.ncols() != grid.n_pixels() {
            return Err(Error::Shape(format!(
                "casorati matrix is {}x{} but expected {}x{}",
                values.nrows(),
                values.ncols(),
                time_axis.n_frames,
                grid.n_pixels()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("casorati matrix".into()));
        }
        Ok(Self { values, grid, time_axis })
    }

    pub fn zeros(grid: ImageGrid, time_axis: TimeAxis) -> Self {
        let values = Array2::zeros((time_axis.n_frames, grid.n_pixels()));
        Self { values, grid, time_axis }
    }

    pub fn n_frames(&self) -> usize {
        self.time_axis.n_frames
    }

    pub fn frame(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn frame_mut(&mut self, i: usize) -> ArrayViewMut1<'_, f64> {
        self.values.row_mut(i)
    }

    /// Mean per-pixel standard deviation across time; 0 for a static clip.
    pub fn mean_temporal_std(&self) -> f64 {
        let nt = self.n_frames() as f64;
        if nt < 2.0 {
            return 0.0;
        }
        let n = self.values.ncols();
        let mut acc = 0.0;
        for j in 0..n {
            let col = self.values.column(j);
            let mean = col.sum() / nt;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nt;
            acc += var.sqrt();
        }
        acc / n as f64
    }
}

/// Per-frame, per-pixel 2-vector field, same layout metadata as
/// [`CasoratiImage`]. Axis 2 holds the (x, y) components.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub values: Array3<f64>,
    pub grid: ImageGrid,
    pub time_axis: TimeAxis,
}

impl VelocityGrid {
    pub fn zeros(grid: ImageGrid, time_axis: TimeAxis) -> Self {
        let values = Array3::zeros((time_axis.n_frames, grid.n_pixels(), 2));
        Self { values, grid, time_axis }
    }
}

/// Downsample a single frame by averaging `factor x factor` blocks.
///
/// `image` is row-major on an `nx_in x ny_in` grid; both dimensions must be
/// divisible by `factor`.
pub fn pool_average(image: &[f64], nx_in: usize, ny_in: usize, factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::Config("pooling factor must be positive".into()));
    }
    if nx_in % factor != 0 || ny_in % factor != 0 {
        return Err(Error::Shape(format!(
            "cannot pool {nx_in}x{ny_in} image by factor {factor}"
        )));
    }
    if image.len() != nx_in * ny_in {
        return Err(Error::Shape(format!(
            "image has {} values, expected {}",
            image.len(),
            nx_in * ny_in
        )));
    }
    let nx_out = nx_in / factor;
    let ny_out = ny_in / factor;
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; nx_out * ny_out];
    for oy in 0..ny_out {
        for ox in 0..nx_out {
            let mut acc = 0.0;
            for dy in 0..factor {
                let row = (oy * factor + dy) * nx_in + ox * factor;
                for dx in 0..factor {
                    acc += image[row + dx];
                }
            }
            out[oy * nx_out + ox] = acc * norm;
        }
    }
    Ok(out)
}

/// Pool every frame of a Casorati image down to `grid.n / factor`.
pub fn pool_average_volume(u: &CasoratiImage, factor: usize) -> Result<CasoratiImage> {
    let g = &u.grid;
    if g.nx % factor != 0 || g.ny % factor != 0 {
        return Err(Error::Shape(format!(
            "cannot pool {}x{} grid by factor {factor}",
            g.nx, g.ny
        )));
    }
    let out_grid = ImageGrid::new(g.nx / factor, g.ny / factor, g.extent)?;
    let mut out = CasoratiImage::zeros(out_grid, u.time_axis.clone());
    for i in 0..u.n_frames() {
        let pooled = pool_average(u.frame(i).as_slice().unwrap(), g.nx, g.ny, factor)?;
        out.frame_mut(i).assign(&ndarray::ArrayView1::from(&pooled));
    }
    Ok(out)
}
