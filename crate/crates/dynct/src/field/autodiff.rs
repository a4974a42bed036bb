//! Forward tangent propagation and the reverse parameter sweep.
//!
//! The forward pass optionally carries tangents along up to three input
//! directions (x, y, t) through the embedding and every tanh layer:
//!
//! ```text
//! z_l  = W_l a_{l-1} + b_l          zdot_l  = W_l adot_{l-1}
//! a_l  = tanh(z_l)                  adot_l  = (1 - a_l^2) . zdot_l
//! ```
//!
//! The backward pass takes cotangents of the outputs *and* of the output
//! tangents and pushes them through that augmented graph, which yields
//! exact gradients of losses containing input derivatives. The extra term
//! relative to plain backprop comes from the dependence of `adot_l` on
//! `a_l` through the tanh' factor.

use super::{MlpParams, NeuralField};
use ndarray::{Array2, Axis};
use std::f64::consts::TAU;

/// Saved intermediates of one batched forward pass.
pub struct ForwardTrace {
    /// n x out_dim network output.
    pub out: Array2<f64>,
    /// Output tangent per active direction (x, y, t).
    pub out_tan: [Option<Array2<f64>>; 3],
    emb: Array2<f64>,
    emb_tan: [Option<Array2<f64>>; 3],
    /// Post-activation hidden states a_1 .. a_L.
    hidden: Vec<Array2<f64>>,
    /// Pre-activation tangents zdot per direction, per hidden layer.
    ztan: [Option<Vec<Array2<f64>>>; 3],
    /// Post-activation tangents adot per direction, per hidden layer.
    atan: [Option<Vec<Array2<f64>>>; 3],
}

impl ForwardTrace {
    pub fn n_points(&self) -> usize {
        self.out.nrows()
    }
}

impl NeuralField {
    /// Run the network over a batch, carrying tangents for each direction
    /// with `dirs[d] = true` (0 = x, 1 = y, 2 = t).
    pub fn forward(&self, points: &[[f64; 3]], dirs: [bool; 3]) -> ForwardTrace {
        let n = points.len();
        let m_x = self.arch.m_x;
        let m_t = self.arch.m_t;
        let m = self.arch.embed_dim();

        // Embedding values and, where requested, their input derivatives.
        let mut emb = Array2::zeros((n, m));
        let mut emb_tan: [Option<Array2<f64>>; 3] =
            dirs.map(|on| if on { Some(Array2::zeros((n, m))) } else { None });
        let bx = &self.embedding.bx;
        let bt = &self.embedding.bt;
        for (i, p) in points.iter().enumerate() {
            for k in 0..m_x {
                let (w0, w1) = (bx[(k, 0)], bx[(k, 1)]);
                let phase = TAU * (w0 * p[0] + w1 * p[1]);
                let (s, c) = phase.sin_cos();
                emb[(i, k)] = s;
                emb[(i, m_x + k)] = c;
                for (d, w) in [(0usize, w0), (1, w1)] {
                    if let Some(tan) = emb_tan[d].as_mut() {
                        tan[(i, k)] = TAU * w * c;
                        tan[(i, m_x + k)] = -TAU * w * s;
                    }
                }
            }
            for k in 0..m_t {
                let w = bt[(k, 0)];
                let phase = TAU * w * p[2];
                let (s, c) = phase.sin_cos();
                emb[(i, 2 * m_x + k)] = s;
                emb[(i, 2 * m_x + m_t + k)] = c;
                if let Some(tan) = emb_tan[2].as_mut() {
                    tan[(i, 2 * m_x + k)] = TAU * w * c;
                    tan[(i, 2 * m_x + m_t + k)] = -TAU * w * s;
                }
            }
        }

        let n_layers = self.params.weights.len();
        let n_hidden = n_layers - 1;
        let mut hidden = Vec::with_capacity(n_hidden);
        let mut ztan: [Option<Vec<Array2<f64>>>; 3] =
            dirs.map(|on| if on { Some(Vec::with_capacity(n_hidden)) } else { None });
        let mut atan: [Option<Vec<Array2<f64>>>; 3] =
            dirs.map(|on| if on { Some(Vec::with_capacity(n_hidden)) } else { None });

        for l in 0..n_hidden {
            let w = &self.params.weights[l];
            let b = &self.params.biases[l];
            let prev = if l == 0 { &emb } else { &hidden[l - 1] };
            let mut a = prev.dot(&w.t());
            a += b;
            a.mapv_inplace(f64::tanh);
            for d in 0..3 {
                if !dirs[d] {
                    continue;
                }
                let prev_tan: &Array2<f64> = if l == 0 {
                    emb_tan[d].as_ref().unwrap()
                } else {
                    &atan[d].as_ref().unwrap()[l - 1]
                };
                let z_dot = prev_tan.dot(&w.t());
                let mut a_dot = z_dot.clone();
                ndarray::Zip::from(&mut a_dot).and(&a).for_each(|ad, &av| {
                    *ad *= 1.0 - av * av;
                });
                ztan[d].as_mut().unwrap().push(z_dot);
                atan[d].as_mut().unwrap().push(a_dot);
            }
            hidden.push(a);
        }

        let w_last = &self.params.weights[n_hidden];
        let b_last = &self.params.biases[n_hidden];
        let last_in = if n_hidden == 0 { &emb } else { &hidden[n_hidden - 1] };
        let mut out = last_in.dot(&w_last.t());
        out += b_last;
        let mut out_tan: [Option<Array2<f64>>; 3] = [None, None, None];
        for d in 0..3 {
            if !dirs[d] {
                continue;
            }
            let prev_tan: &Array2<f64> = if n_hidden == 0 {
                emb_tan[d].as_ref().unwrap()
            } else {
                &atan[d].as_ref().unwrap()[n_hidden - 1]
            };
            out_tan[d] = Some(prev_tan.dot(&w_last.t()));
        }

        ForwardTrace { out, out_tan, emb, emb_tan, hidden, ztan, atan }
    }

    /// Reverse sweep: given d(loss)/d(out) and optionally d(loss)/d(out
    /// tangent) per direction, accumulate the exact gradient with respect
    /// to every weight and bias.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        cot_out: &Array2<f64>,
        cot_out_tan: [Option<&Array2<f64>>; 3],
    ) -> MlpParams {
        let n_layers = self.params.weights.len();
        let n_hidden = n_layers - 1;
        let mut grads = MlpParams::zeros_like(&self.params);

        let last_in = if n_hidden == 0 { &trace.emb } else { &trace.hidden[n_hidden - 1] };
        let w_last = &self.params.weights[n_hidden];

        grads.weights[n_hidden] = cot_out.t().dot(last_in);
        grads.biases[n_hidden] = cot_out.sum_axis(Axis(0));
        let mut ca = cot_out.dot(w_last); // cotangent of a_L
        let mut cat: [Option<Array2<f64>>; 3] = [None, None, None];
        for d in 0..3 {
            if let Some(ct) = cot_out_tan[d] {
                let last_tan: &Array2<f64> = if n_hidden == 0 {
                    trace.emb_tan[d].as_ref().unwrap()
                } else {
                    &trace.atan[d].as_ref().unwrap()[n_hidden - 1]
                };
                grads.weights[n_hidden] += &ct.t().dot(last_tan);
                cat[d] = Some(ct.dot(w_last));
            }
        }

        for l in (0..n_hidden).rev() {
            let a = &trace.hidden[l];
            let prev = if l == 0 { &trace.emb } else { &trace.hidden[l - 1] };
            let w = &self.params.weights[l];

            // tanh' factor and its coupling back into the value path.
            let mut cz_tan: [Option<Array2<f64>>; 3] = [None, None, None];
            for d in 0..3 {
                if let Some(cat_d) = cat[d].as_ref() {
                    let z_dot = &trace.ztan[d].as_ref().unwrap()[l];
                    let mut cz = cat_d.clone();
                    ndarray::Zip::from(&mut cz).and(a).for_each(|c, &av| {
                        *c *= 1.0 - av * av;
                    });
                    // d(adot)/d(a) = -2 a . zdot
                    ndarray::Zip::from(&mut ca)
                        .and(cat_d)
                        .and(z_dot)
                        .and(a)
                        .for_each(|cv, &catv, &zv, &av| {
                            *cv += catv * zv * (-2.0 * av);
                        });
                    cz_tan[d] = Some(cz);
                }
            }
            let mut cz = ca;
            ndarray::Zip::from(&mut cz).and(a).for_each(|c, &av| {
                *c *= 1.0 - av * av;
            });

            grads.weights[l] += &cz.t().dot(prev);
            grads.biases[l] = cz.sum_axis(Axis(0));
            for d in 0..3 {
                if let Some(czt) = cz_tan[d].as_ref() {
                    let prev_tan: &Array2<f64> = if l == 0 {
                        trace.emb_tan[d].as_ref().unwrap()
                    } else {
                        &trace.atan[d].as_ref().unwrap()[l - 1]
                    };
                    grads.weights[l] += &czt.t().dot(prev_tan);
                }
            }

            ca = cz.dot(w);
            for d in 0..3 {
                cat[d] = cz_tan[d].as_ref().map(|czt| czt.dot(w));
            }
        }

        grads
    }
}

#[cfg(test)]
mod tests {
    use super::super::{init_field, FieldArch};
    use ndarray::Array2;

    fn arch(width: usize, out_dim: usize) -> FieldArch {
        FieldArch {
            m_x: 4,
            m_t: 3,
            sigma_x: 0.8,
            sigma_t: 0.6,
            hidden_layers: 2,
            hidden_width: width,
            out_dim,
        }
    }

    #[test]
    fn input_derivs_match_central_differences() {
        let f = init_field(41, &arch(16, 1)).unwrap();
        let h = 1e-5;
        let pts = [[0.3, -0.2, 0.6], [0.0, 0.0, 0.0], [-0.9, 0.8, 0.2]];
        for p in pts {
            let (_, dx, dy, dt) = f.input_derivs(p[0], p[1], p[2]);
            let fd = |d: usize| {
                let mut lo = p;
                let mut hi = p;
                lo[d] -= h;
                hi[d] += h;
                (f.eval_one(hi[0], hi[1], hi[2])[0] - f.eval_one(lo[0], lo[1], lo[2])[0])
                    / (2.0 * h)
            };
            for (d, got) in [dx[0], dy[0], dt[0]].iter().enumerate() {
                let want = fd(d);
                let denom = want.abs().max(1e-8);
                assert!(
                    (got - want).abs() / denom < 1e-6,
                    "direction {d}: got {got}, fd {want}"
                );
            }
        }
    }

    #[test]
    fn zero_last_layer_kills_derivatives() {
        let mut f = init_field(43, &arch(8, 1)).unwrap();
        f.params.weights.last_mut().unwrap().fill(0.0);
        let (u, dx, dy, dt) = f.input_derivs(0.3, 0.1, -0.4);
        assert_eq!(u[0], 0.0);
        assert_eq!((dx[0], dy[0], dt[0]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn time_independent_field_has_zero_dt() {
        let a = FieldArch { sigma_t: 0.0, ..arch(8, 1) };
        let f = init_field(47, &a).unwrap();
        let (_, _, _, dt) = f.input_derivs(0.2, -0.6, 0.9);
        assert_eq!(dt[0], 0.0);
    }

    /// Finite-difference check of parameter gradients for a loss that mixes
    /// the value with all three input derivatives:
    /// loss = sum_i ( u_i^2 + (du/dx)_i + 2 (du/dy)_i + 3 (du/dt)_i ).
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let f = init_field(53, &arch(8, 2)).unwrap();
        let pts = vec![[0.25, -0.5, 0.3], [0.7, 0.1, -0.2], [0.0, 0.4, 0.8]];

        let loss = |field: &super::super::NeuralField| -> f64 {
            let t = field.forward(&pts, [true; 3]);
            let mut acc = 0.0;
            for i in 0..pts.len() {
                for k in 0..2 {
                    acc += t.out[(i, k)] * t.out[(i, k)];
                    acc += t.out_tan[0].as_ref().unwrap()[(i, k)];
                    acc += 2.0 * t.out_tan[1].as_ref().unwrap()[(i, k)];
                    acc += 3.0 * t.out_tan[2].as_ref().unwrap()[(i, k)];
                }
            }
            acc
        };

        // Analytic gradient via the reverse sweep.
        let trace = f.forward(&pts, [true; 3]);
        let cot_out = 2.0 * &trace.out;
        let ones = Array2::from_elem(trace.out.raw_dim(), 1.0);
        let twos = Array2::from_elem(trace.out.raw_dim(), 2.0);
        let threes = Array2::from_elem(trace.out.raw_dim(), 3.0);
        let grads = f.backward(&trace, &cot_out, [Some(&ones), Some(&twos), Some(&threes)]);

        // Central differences over every parameter.
        let flat = f.params.flatten();
        let gflat = grads.flatten();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for k in 0..flat.len() {
            let mut fp = f.clone();
            let mut plus = flat.clone();
            plus[k] += h;
            fp.params.assign_flat(&plus).unwrap();
            let lp = loss(&fp);
            let mut minus = flat.clone();
            minus[k] -= h;
            fp.params.assign_flat(&minus).unwrap();
            let lm = loss(&fp);
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(1e-6);
            worst = worst.max((gflat[k] - fd).abs() / denom);
        }
        assert!(worst < 1e-5, "worst parameter-gradient mismatch {worst}");
    }

    #[test]
    fn batch_gradient_is_sum_of_pointwise_gradients() {
        let f = init_field(59, &arch(8, 1)).unwrap();
        let pts = vec![[0.1, 0.2, 0.3], [-0.4, 0.5, -0.6]];
        let trace = f.forward(&pts, [false, false, true]);
        let cot = Array2::from_elem((2, 1), 1.0);
        let tan_cot = Array2::from_elem((2, 1), 0.5);
        let combined = f.backward(&trace, &cot, [None, None, Some(&tan_cot)]);

        let mut summed = super::super::MlpParams::zeros_like(&f.params);
        for p in &pts {
            let tr = f.forward(std::slice::from_ref(p), [false, false, true]);
            let c = Array2::from_elem((1, 1), 1.0);
            let tc = Array2::from_elem((1, 1), 0.5);
            let g = f.backward(&tr, &c, [None, None, Some(&tc)]);
            summed.add_scaled(&g, 1.0);
        }
        let a = combined.flatten();
        let b = summed.flatten();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_quadratic_loss_has_zero_gradient() {
        // loss = u(p)^2 with u(p) = 0 by zeroed last layer: the chain-rule
        // factor 2 u(p) kills every parameter gradient.
        let mut f = init_field(61, &arch(8, 1)).unwrap();
        f.params.weights.last_mut().unwrap().fill(0.0);
        f.params.biases.last_mut().unwrap().fill(0.0);
        let pts = [[0.3, 0.3, 0.3]];
        let trace = f.forward(&pts, [false; 3]);
        let cot = 2.0 * &trace.out; // all zero
        let grads = f.backward(&trace, &cot, [None, None, None]);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }
}
