//! Coordinate-MLP neural fields with Fourier feature embedding and the
//! differentiation engine behind them.
//!
//! A field maps a space-time point (x, y, t) through fixed random
//! sinusoidal features into a small tanh MLP. Training needs two kinds of
//! derivatives: input derivatives (du/dx, du/dy, du/dt) that appear inside
//! the PDE regularizer, and parameter gradients of losses built from those
//! derivatives. Input derivatives are propagated forward (three tangent
//! directions are cheap); parameter gradients come from a reverse sweep
//! over the augmented forward computation, so mixed second derivatives
//! d2u/(dtheta dx) are exact.

mod adam;
mod autodiff;
mod checkpoint;
mod tape;

pub use adam::{adam_step, AdamState};
pub use autodiff::ForwardTrace;
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use tape::{LossGraph, Var};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

/// Architecture of one field: Fourier embedding sizes and MLP shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldArch {
    pub m_x: usize,
    pub m_t: usize,
    pub sigma_x: f64,
    pub sigma_t: f64,
    /// Number of hidden (tanh) layers L.
    pub hidden_layers: usize,
    /// Width of each hidden layer.
    pub hidden_width: usize,
    /// 1 for an image field, 2 for a velocity field.
    pub out_dim: usize,
}

impl FieldArch {
    /// Paper-scale image field: m_x = m_t = 32, three hidden layers of 128.
    pub fn image_default() -> Self {
        Self {
            m_x: 32,
            m_t: 32,
            sigma_x: 0.1,
            sigma_t: 0.1,
            hidden_layers: 3,
            hidden_width: 128,
            out_dim: 1,
        }
    }

    /// Paper-scale velocity field: same trunk, two outputs.
    pub fn velocity_default() -> Self {
        Self { out_dim: 2, ..Self::image_default() }
    }

    /// Embedding output size 2 m_x + 2 m_t.
    pub fn embed_dim(&self) -> usize {
        2 * (self.m_x + self.m_t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_x == 0 || self.m_t == 0 || self.hidden_width == 0 || self.out_dim == 0 {
            return Err(Error::Config("field architecture sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fixed (non-trainable) Fourier feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEmbedding {
    /// m_x x 2, entries N(0, sigma_x^2).
    pub bx: Array2<f64>,
    /// m_t x 1, entries N(0, sigma_t^2).
    pub bt: Array2<f64>,
}

/// Trainable weights and biases, first layer taking the embedding output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    pub fn zeros_like(other: &Self) -> Self {
        Self {
            weights: other.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: other.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(scale, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(scale, o);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Flat view in declaration order (layer by layer, weights row-major,
    /// then bias). Used by checkpoints and finite-difference tests.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[k];
                k += 1;
            }
            for v in b.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }
}

/// A complete neural field: embedding, MLP and the seed it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField {
    pub arch: FieldArch,
    pub embedding: FourierEmbedding,
    pub params: MlpParams,
    pub init_seed: u64,
}

/// Draw a field deterministically from a seed: B matrices Gaussian,
/// weights Xavier-uniform, biases zero.
pub fn init_field(seed: u64, arch: &FieldArch) -> Result<NeuralField> {
    arch.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let gauss = |rng: &mut ChaCha12Rng, rows: usize, cols: usize, sigma: f64| -> Array2<f64> {
        if sigma == 0.0 {
            return Array2::zeros((rows, cols));
        }
        let dist = Normal::new(0.0, sigma).expect("sigma validated");
        Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
    };
    let bx = gauss(&mut rng, arch.m_x, 2, arch.sigma_x);
    let bt = gauss(&mut rng, arch.m_t, 1, arch.sigma_t);

    let mut dims = vec![arch.embed_dim()];
    dims.extend(std::iter::repeat(arch.hidden_width).take(arch.hidden_layers));
    dims.push(arch.out_dim);

    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| (rng.gen::<f64>() * 2.0 - 1.0) * limit);
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }

    Ok(NeuralField {
        arch: *arch,
        embedding: FourierEmbedding { bx, bt },
        params: MlpParams { weights, biases },
        init_seed: seed,
    })
}

/// Fourier lift of one point:
/// (sin(2 pi Bx p), cos(2 pi Bx p), sin(2 pi Bt t), cos(2 pi Bt t)).
pub fn embed(x: f64, y: f64, t: f64, emb: &FourierEmbedding) -> Vec<f64> {
    let m_x = emb.bx.nrows();
    let m_t = emb.bt.nrows();
    let mut out = vec![0.0; 2 * (m_x + m_t)];
    for k in 0..m_x {
        let phase = std::f64::consts::TAU * (emb.bx[(k, 0)] * x + emb.bx[(k, 1)] * y);
        out[k] = phase.sin();
        out[m_x + k] = phase.cos();
    }
    for k in 0..m_t {
        let phase = std::f64::consts::TAU * emb.bt[(k, 0)] * t;
        out[2 * m_x + k] = phase.sin();
        out[2 * m_x + m_t + k] = phase.cos();
    }
    out
}

impl NeuralField {
    /// Batched evaluation, values only.
    pub fn eval_batch(&self, points: &[[f64; 3]]) -> Array2<f64> {
        let trace = self.forward(points, [false; 3]);
        trace.out
    }

    /// Value at a single point (length `out_dim`).
    pub fn eval_one(&self, x: f64, y: f64, t: f64) -> Vec<f64> {
        self.eval_batch(&[[x, y, t]]).row(0).to_vec()
    }

    /// Value and the three input derivatives at one point; each entry has
    /// length `out_dim`.
    pub fn input_derivs(&self, x: f64, y: f64, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let trace = self.forward(&[[x, y, t]], [true; 3]);
        (
            trace.out.row(0).to_vec(),
            trace.out_tan[0].as_ref().unwrap().row(0).to_vec(),
            trace.out_tan[1].as_ref().unwrap().row(0).to_vec(),
            trace.out_tan[2].as_ref().unwrap().row(0).to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> FieldArch {
        FieldArch {
            m_x: 4,
            m_t: 3,
            sigma_x: 0.5,
            sigma_t: 0.3,
            hidden_layers: 2,
            hidden_width: 8,
            out_dim: 1,
        }
    }

    #[test]
    fn embedding_dimension_matches_paper_sizes() {
        let arch = FieldArch::image_default();
        assert_eq!(arch.embed_dim(), 128);
        let f = init_field(0, &arch).unwrap();
        assert_eq!(embed(0.1, -0.2, 0.3, &f.embedding).len(), 128);
    }

    #[test]
    fn init_deterministic_under_seed() {
        let arch = small_arch();
        let a = init_field(17, &arch).unwrap();
        let b = init_field(17, &arch).unwrap();
        assert_eq!(a, b);
        let c = init_field(18, &arch).unwrap();
        assert_ne!(a.params.weights[0], c.params.weights[0]);
    }

    #[test]
    fn zero_sigma_gives_zero_embedding_matrix() {
        let arch = FieldArch { sigma_x: 0.0, ..small_arch() };
        let f = init_field(3, &arch).unwrap();
        assert!(f.embedding.bx.iter().all(|&v| v == 0.0));
        assert!(f.embedding.bt.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn embed_at_origin_is_sin_zero_cos_one() {
        let f = init_field(5, &small_arch()).unwrap();
        let e = embed(0.0, 0.0, 0.0, &f.embedding);
        let m_x = 4;
        let m_t = 3;
        for k in 0..m_x {
            assert_eq!(e[k], 0.0);
            assert_eq!(e[m_x + k], 1.0);
        }
        for k in 0..m_t {
            assert_eq!(e[2 * m_x + k], 0.0);
            assert_eq!(e[2 * m_x + m_t + k], 1.0);
        }
    }

    #[test]
    fn embed_entries_bounded() {
        let f = init_field(5, &small_arch()).unwrap();
        for p in [[0.3, -0.7, 0.5], [10.0, -20.0, 3.0]] {
            let e = embed(p[0], p[1], p[2], &f.embedding);
            assert!(e.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn embed_phase_periodicity() {
        // Shifting any row's phase Bx.(x,y) by exactly 1 leaves the output
        // unchanged; realize the shift by scaling a 1-row matrix.
        let mut emb = FourierEmbedding {
            bx: Array2::from_shape_vec((1, 2), vec![0.25, 0.0]).unwrap(),
            bt: Array2::zeros((1, 1)),
        };
        let a = embed(1.0, 0.0, 0.0, &emb); // phase 0.25
        emb.bx[(0, 0)] = 1.25; // phase 1.25 at the same point
        let b = embed(1.0, 0.0, 0.0, &emb);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut f = init_field(11, &small_arch()).unwrap();
        for w in f.params.weights.iter_mut() {
            w.fill(0.0);
        }
        let out = f.eval_batch(&[[0.2, 0.4, -0.3], [0.0, 0.0, 0.0]]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_matches_per_point_loop() {
        let f = init_field(23, &small_arch()).unwrap();
        let pts = [[0.1, 0.2, 0.3], [-0.5, 0.7, 0.9], [0.0, -1.0, 0.5]];
        let batch = f.eval_batch(&pts);
        for (i, p) in pts.iter().enumerate() {
            let single = f.eval_one(p[0], p[1], p[2]);
            assert_eq!(batch.row(i).to_vec(), single);
        }
    }

    #[test]
    fn output_bounded_by_last_layer_norms() {
        let f = init_field(29, &small_arch()).unwrap();
        let w_last = f.params.weights.last().unwrap();
        let b_last = f.params.biases.last().unwrap();
        let bound = w_last.iter().map(|v| v.abs()).sum::<f64>()
            + b_last.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for p in [[0.5, 0.5, 0.5], [-3.0, 2.0, 8.0]] {
            let v = f.eval_one(p[0], p[1], p[2])[0];
            assert!(v.abs() <= bound);
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let f = init_field(31, &small_arch()).unwrap();
        let flat = f.params.flatten();
        let mut copy = MlpParams::zeros_like(&f.params);
        copy.assign_flat(&flat).unwrap();
        assert_eq!(copy, f.params);
        assert_eq!(flat.len(), f.params.n_params());
    }
}
