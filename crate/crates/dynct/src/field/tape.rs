//! A small scalar reverse-mode tape whose leaves are neural-field outputs.
//!
//! Losses are built as scalar expressions over the values and input
//! derivatives of one or more field batches. Reversing the tape yields
//! cotangents on every field-output leaf; those are then pushed through
//! [`NeuralField::backward`] to produce parameter gradients. Together the
//! two stages form the explicit augmented computation graph that training
//! losses with embedded PDE terms require.

use super::{ForwardTrace, MlpParams, NeuralField};
use crate::error::{Error, Result};
use ndarray::Array2;

/// Handle to one scalar node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    parents: [(usize, f64); 2],
    n_parents: u8,
}

/// Scalar expression recorder plus the field batches feeding it.
pub struct LossGraph<'a> {
    nodes: Vec<Node>,
    batches: Vec<BatchRecord<'a>>,
}

struct BatchRecord<'a> {
    field: &'a NeuralField,
    trace: ForwardTrace,
    value_start: usize,
    tan_start: [Option<usize>; 3],
}

/// Leaf handles for one registered batch; indexing is row-major over
/// (point, output component).
pub struct FieldBatchVars {
    pub values: Vec<Var>,
    pub dx: Option<Vec<Var>>,
    pub dy: Option<Vec<Var>>,
    pub dt: Option<Vec<Var>>,
}

impl<'a> LossGraph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), batches: Vec::new() }
    }

    fn push(&mut self, value: f64, parents: [(usize, f64); 2], n_parents: u8) -> Var {
        self.nodes.push(Node { value, parents, n_parents });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.push(c, [(0, 0.0); 2], 0)
    }

    /// Evaluate `field` over `points` (with tangents where `dirs` is set)
    /// and register every output as a tape leaf.
    pub fn field_batch(
        &mut self,
        field: &'a NeuralField,
        points: &[[f64; 3]],
        dirs: [bool; 3],
    ) -> FieldBatchVars {
        let trace = field.forward(points, dirs);
        let n = trace.n_points();
        let d = field.arch.out_dim;

        let value_start = self.nodes.len();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            for k in 0..d {
                values.push(self.push(trace.out[(i, k)], [(0, 0.0); 2], 0));
            }
        }
        let mut tan_start = [None, None, None];
        let mut tan_vars: [Option<Vec<Var>>; 3] = [None, None, None];
        for dir in 0..3 {
            if let Some(tan) = trace.out_tan[dir].as_ref() {
                tan_start[dir] = Some(self.nodes.len());
                let mut vars = Vec::with_capacity(n * d);
                for i in 0..n {
                    for k in 0..d {
                        vars.push(self.push(tan[(i, k)], [(0, 0.0); 2], 0));
                    }
                }
                tan_vars[dir] = Some(vars);
            }
        }
        self.batches.push(BatchRecord { field, trace, value_start, tan_start });
        let [dx, dy, dt] = tan_vars;
        FieldBatchVars { values, dx, dy, dt }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value + self.nodes[b.0].value;
        self.push(v, [(a.0, 1.0), (b.0, 1.0)], 2)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value - self.nodes[b.0].value;
        self.push(v, [(a.0, 1.0), (b.0, -1.0)], 2)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.nodes[a.0].value, self.nodes[b.0].value);
        self.push(va * vb, [(a.0, vb), (b.0, va)], 2)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.nodes[a.0].value, self.nodes[b.0].value);
        self.push(va / vb, [(a.0, 1.0 / vb), (b.0, -va / (vb * vb))], 2)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.nodes[a.0].value;
        self.push(v, [(a.0, c), (0, 0.0)], 1)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.nodes[a.0].value + c;
        self.push(v, [(a.0, 1.0), (0, 0.0)], 1)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let va = self.nodes[a.0].value;
        self.push(va * va, [(a.0, 2.0 * va), (0, 0.0)], 1)
    }

    /// |a| with subgradient 0 at the kink.
    pub fn abs(&mut self, a: Var) -> Var {
        let va = self.nodes[a.0].value;
        self.push(va.abs(), [(a.0, va.signum() * f64::from(va != 0.0)), (0, 0.0)], 1)
    }

    /// sqrt(a) with subgradient 0 at a = 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let va = self.nodes[a.0].value;
        let r = va.sqrt();
        let partial = if r > 0.0 { 0.5 / r } else { 0.0 };
        self.push(r, [(a.0, partial), (0, 0.0)], 1)
    }

    pub fn sum(&mut self, vars: &[Var]) -> Var {
        match vars {
            [] => self.constant(0.0),
            [only] => *only,
            rest => {
                let mut acc = rest[0];
                for v in &rest[1..] {
                    acc = self.add(acc, *v);
                }
                acc
            }
        }
    }

    /// Charbonnier-smoothed square root: sqrt(s + eps^2) - eps (plain
    /// sqrt when eps = 0).
    pub fn smooth_sqrt(&mut self, s: Var, eps: f64) -> Var {
        if eps == 0.0 {
            return self.sqrt(s);
        }
        let shifted = self.add_const(s, eps * eps);
        let root = self.sqrt(shifted);
        self.add_const(root, -eps)
    }

    /// Reverse sweep from the scalar `root`, returning parameter gradients
    /// for every registered field batch in registration order.
    pub fn grads(self, roots: &[Var]) -> Result<(f64, Vec<MlpParams>)> {
        let root = match roots {
            [only] => *only,
            _ => {
                return Err(Error::Config(format!(
                    "loss must be a single scalar, got {} roots",
                    roots.len()
                )))
            }
        };
        if !self.nodes[root.0].value.is_finite() {
            return Err(Error::NonFinite("loss value".into()));
        }
        let mut cot = vec![0.0; self.nodes.len()];
        cot[root.0] = 1.0;
        for i in (0..=root.0).rev() {
            let c = cot[i];
            if c == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            for p in 0..node.n_parents as usize {
                let (idx, w) = node.parents[p];
                cot[idx] += w * c;
            }
        }

        let mut out = Vec::with_capacity(self.batches.len());
        for rec in &self.batches {
            let n = rec.trace.n_points();
            let d = rec.field.arch.out_dim;
            let slice_to_matrix = |start: usize| -> Array2<f64> {
                Array2::from_shape_fn((n, d), |(i, k)| cot[start + i * d + k])
            };
            let cot_out = slice_to_matrix(rec.value_start);
            let cot_tans: [Option<Array2<f64>>; 3] =
                [0, 1, 2].map(|dir| rec.tan_start[dir].map(slice_to_matrix));
            let cot_refs: [Option<&Array2<f64>>; 3] =
                [cot_tans[0].as_ref(), cot_tans[1].as_ref(), cot_tans[2].as_ref()];
            out.push(rec.field.backward(&rec.trace, &cot_out, cot_refs));
        }
        Ok((self.nodes[root.0].value, out))
    }
}

impl Default for LossGraph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{init_field, FieldArch};
    use super::*;

    fn tiny() -> super::super::NeuralField {
        let arch = FieldArch {
            m_x: 3,
            m_t: 2,
            sigma_x: 0.7,
            sigma_t: 0.4,
            hidden_layers: 1,
            hidden_width: 2, // 2-hidden-unit network
            out_dim: 1,
        };
        init_field(71, &arch).unwrap()
    }

    #[test]
    fn squared_value_loss_with_zero_output_has_zero_gradient() {
        let mut f = tiny();
        f.params.weights.last_mut().unwrap().fill(0.0);
        f.params.biases.last_mut().unwrap().fill(0.0);
        let mut g = LossGraph::new();
        let batch = g.field_batch(&f, &[[0.2, -0.1, 0.5]], [false; 3]);
        let loss = g.square(batch.values[0]);
        let (value, grads) = g.grads(&[loss]).unwrap();
        assert_eq!(value, 0.0);
        assert!(grads[0].flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dt_squared_loss_matches_finite_differences() {
        let f = tiny();
        let pts = [[0.3, 0.2, -0.4], [0.1, -0.6, 0.9]];

        let eval_loss = |field: &super::super::NeuralField| -> f64 {
            let tr = field.forward(&pts, [false, false, true]);
            let dt = tr.out_tan[2].as_ref().unwrap();
            dt.iter().map(|v| v * v).sum()
        };

        let mut g = LossGraph::new();
        let batch = g.field_batch(&f, &pts, [false, false, true]);
        let squares: Vec<Var> = batch
            .dt
            .as_ref()
            .unwrap()
            .iter()
            .map(|&v| g.square(v))
            .collect();
        let loss = g.sum(&squares);
        let (value, grads) = g.grads(&[loss]).unwrap();
        assert!((value - eval_loss(&f)).abs() < 1e-12);

        let flat = f.params.flatten();
        let gflat = grads[0].flatten();
        let h = 1e-6;
        for k in 0..flat.len() {
            let mut fp = f.clone();
            let mut pv = flat.clone();
            pv[k] += h;
            fp.params.assign_flat(&pv).unwrap();
            let lp = eval_loss(&fp);
            pv[k] -= 2.0 * h;
            fp.params.assign_flat(&pv).unwrap();
            let lm = eval_loss(&fp);
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(1e-6);
            assert!(
                (gflat[k] - fd).abs() / denom < 1e-5,
                "param {k}: tape {} vs fd {fd}",
                gflat[k]
            );
        }
    }

    #[test]
    fn batch_loss_gradient_is_sum_of_pointwise() {
        let f = tiny();
        let pts = [[0.3, 0.2, -0.4], [0.1, -0.6, 0.9], [0.0, 0.0, 0.0]];
        let mut g = LossGraph::new();
        let batch = g.field_batch(&f, &pts, [false; 3]);
        let squares: Vec<Var> = batch.values.iter().map(|&v| g.square(v)).collect();
        let loss = g.sum(&squares);
        let (_, grads) = g.grads(&[loss]).unwrap();

        let mut acc = MlpParams::zeros_like(&f.params);
        for p in &pts {
            let mut g1 = LossGraph::new();
            let b1 = g1.field_batch(&f, std::slice::from_ref(p), [false; 3]);
            let l1 = g1.square(b1.values[0]);
            let (_, g1v) = g1.grads(&[l1]).unwrap();
            acc.add_scaled(&g1v[0], 1.0);
        }
        for (a, b) in grads[0].flatten().iter().zip(acc.flatten()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let f = tiny();
        let mut g = LossGraph::new();
        let batch = g.field_batch(&f, &[[0.0, 0.0, 0.0]], [false; 3]);
        let a = batch.values[0];
        let b = g.square(a);
        assert!(g.grads(&[a, b]).is_err());
    }

    #[test]
    fn abs_and_sqrt_subgradients_at_kink_are_zero() {
        let mut g: LossGraph<'_> = LossGraph::new();
        let zero = g.constant(0.0);
        let a = g.abs(zero);
        let s = g.sqrt(zero);
        let total = g.add(a, s);
        // No field batches: gradient computation should still succeed.
        let (v, grads) = g.grads(&[total]).unwrap();
        assert_eq!(v, 0.0);
        assert!(grads.is_empty());
    }

    #[test]
    fn smooth_sqrt_matches_charbonnier() {
        let mut g: LossGraph<'_> = LossGraph::new();
        let s = g.constant(0.25);
        let c = g.smooth_sqrt(s, 1e-3);
        let want = (0.25f64 + 1e-6).sqrt() - 1e-3;
        assert!((g.value(c) - want).abs() < 1e-15);
    }
}
