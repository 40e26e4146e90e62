use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Layer sizes of the velocity MLP.
///
/// The network input is `[x (dim), t, 1 - t, one_hot(label) (label_count)]`;
/// hidden layers use `tanh`; the output layer is linear with `dim` units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub label_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSlot {
    pub(crate) w: usize,
    pub(crate) b: usize,
    pub(crate) fan_out: usize,
    pub(crate) fan_in: usize,
}

impl Architecture {
    pub fn new(dim: usize, hidden: Vec<usize>, label_count: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be >= 1"));
        }
        if hidden.contains(&0) {
            return Err(Error::invalid("hidden layer sizes must be >= 1"));
        }
        Ok(Self {
            dim,
            hidden,
            label_count,
        })
    }

    pub fn input_width(&self) -> usize {
        self.dim + 2 + self.label_count
    }

    /// Parameter layout. For each layer in order: the weight matrix
    /// `(fan_out, fan_in)` in row-major order, then the bias vector.
    pub(crate) fn slots(&self) -> Vec<LayerSlot> {
        let mut widths = vec![self.input_width()];
        widths.extend(&self.hidden);
        widths.push(self.dim);
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    w: offset,
                    b: offset + w[0] * w[1],
                    fan_out: w[1],
                    fan_in: w[0],
                };
                offset = slot.b + w[1];
                slot
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.slots().last().map(|s| s.b + s.fan_out).unwrap_or(0)
    }
}

/// A small MLP velocity field `v(x, t, c)`.
///
/// Parameters live in one flat vector whose layout is given by
/// [`Architecture`]; gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    arch: Architecture,
    params: Vec<f64>,
    seed: u64,
}

/// Activations of one forward pass: `acts[l]` is the input of layer `l`
/// (so `acts[0]` is the network input). The output may have been popped off.
pub(crate) struct Trace {
    pub(crate) acts: Vec<Array2<f64>>,
}

impl VelocityModel {
    /// Fresh model: weights `N(0, 1/fan_in)`, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = rng::derived_stream(seed, "init", "");
        let mut params = vec![0.0; arch.param_count()];
        for slot in arch.slots() {
            let scale = 1.0 / (slot.fan_in as f64).sqrt();
            for p in &mut params[slot.w..slot.b] {
                let z: f64 = rng.sample(StandardNormal);
                *p = scale * z;
            }
        }
        Self { arch, params, seed }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>, seed: u64) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Shape {
                context: "parameter vector".into(),
                expected: arch.param_count(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("non-finite parameter"));
        }
        Ok(Self { arch, params, seed })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn dim(&self) -> usize {
        self.arch.dim
    }

    pub fn label_count(&self) -> usize {
        self.arch.label_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weight(&self, slot: LayerSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((slot.fan_out, slot.fan_in), &self.params[slot.w..slot.b])
            .expect("layout")
    }

    fn bias(&self, slot: LayerSlot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[slot.b..slot.b + slot.fan_out])
    }

    /// Assemble network inputs for a batch.
    pub(crate) fn build_input(
        &self,
        x: ArrayView2<'_, f64>,
        t: &[f64],
        labels: Option<&[usize]>,
    ) -> Result<Array2<f64>> {
        let (b, d) = x.dim();
        if d != self.arch.dim {
            return Err(Error::Shape {
                context: "model input dimension".into(),
                expected: self.arch.dim,
                actual: d,
            });
        }
        if t.len() != b {
            return Err(Error::Shape {
                context: "time values".into(),
                expected: b,
                actual: t.len(),
            });
        }
        let k = self.arch.label_count;
        let mut input = Array2::zeros((b, self.arch.input_width()));
        input.slice_mut(s![.., ..d]).assign(&x);
        for (r, &tr) in t.iter().enumerate() {
            input[[r, d]] = tr;
            input[[r, d + 1]] = 1.0 - tr;
        }
        if k > 0 {
            let labels = labels.ok_or_else(|| Error::invalid("conditional model needs labels"))?;
            if labels.len() != b {
                return Err(Error::Shape {
                    context: "labels".into(),
                    expected: b,
                    actual: labels.len(),
                });
            }
            for (r, &c) in labels.iter().enumerate() {
                if c >= k {
                    return Err(Error::invalid(format!(
                        "label {c} out of range for {k} classes"
                    )));
                }
                input[[r, d + 2 + c]] = 1.0;
            }
        }
        Ok(input)
    }

    pub(crate) fn forward_trace(&self, input: Array2<f64>) -> Trace {
        let slots = self.arch.slots();
        let last = slots.len() - 1;
        let mut acts = Vec::with_capacity(slots.len() + 1);
        acts.push(input);
        for (l, &slot) in slots.iter().enumerate() {
            let mut z = acts[l].dot(&self.weight(slot).t());
            z += &self.bias(slot);
            if l != last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        Trace { acts }
    }

    /// Velocity for a batch of states `x` at per-row times `t`.
    pub fn velocity_batch(
        &self,
        x: ArrayView2<'_, f64>,
        t: &[f64],
        labels: Option<&[usize]>,
    ) -> Result<Array2<f64>> {
        let input = self.build_input(x, t, labels)?;
        let mut trace = self.forward_trace(input);
        Ok(trace.acts.pop().expect("at least one layer"))
    }

    /// Back-propagate `dout = dL/d(output)` and return the per-layer error
    /// signals `delta[l] = dL/dz_l`, each `(batch, fan_out)`.
    pub(crate) fn backward(&self, trace: &Trace, dout: Array2<f64>) -> Vec<Array2<f64>> {
        let slots = self.arch.slots();
        let layers = slots.len();
        let mut deltas = vec![Array2::zeros((0, 0)); layers];
        let mut delta = dout;
        for l in (0..layers).rev() {
            if l > 0 {
                let mut prev = delta.dot(&self.weight(slots[l]));
                prev.zip_mut_with(&trace.acts[l], |g, &a| *g *= 1.0 - a * a);
                deltas[l] = delta;
                delta = prev;
            } else {
                deltas[l] = delta;
                break;
            }
        }
        deltas
    }

    /// Accumulate `sum_i g_i` over the batch into the flat `grad` buffer.
    pub(crate) fn accumulate_grad(&self, trace: &Trace, deltas: &[Array2<f64>], grad: &mut [f64]) {
        for (l, slot) in self.arch.slots().into_iter().enumerate() {
            let dw = deltas[l].t().dot(&trace.acts[l]);
            let mut gw =
                ArrayViewMut2::from_shape((slot.fan_out, slot.fan_in), &mut grad[slot.w..slot.b])
                    .expect("layout");
            gw += &dw;
            let db = deltas[l].sum_axis(Axis(0));
            for (g, v) in grad[slot.b..slot.b + slot.fan_out]
                .iter_mut()
                .zip(db.iter())
            {
                *g += v;
            }
        }
    }

    /// `||g_i||^2` per batch row, using `||delta a^T||_F = ||delta|| ||a||`.
    pub(crate) fn grad_sq_norms(&self, trace: &Trace, deltas: &[Array2<f64>]) -> Array1<f64> {
        let b = trace.acts[0].nrows();
        let mut out = Array1::zeros(b);
        for (l, delta) in deltas.iter().enumerate() {
            let a = &trace.acts[l];
            for r in 0..b {
                let dn: f64 = delta.row(r).iter().map(|v| v * v).sum();
                let an: f64 = a.row(r).iter().map(|v| v * v).sum();
                out[r] += dn * an + dn;
            }
        }
        out
    }

    /// `<g_i, direction>` per batch row for a flat `direction` in parameter layout.
    pub(crate) fn grad_dots(
        &self,
        trace: &Trace,
        deltas: &[Array2<f64>],
        direction: &[f64],
    ) -> Array1<f64> {
        let b = trace.acts[0].nrows();
        let mut out = Array1::zeros(b);
        for (l, slot) in self.arch.slots().into_iter().enumerate() {
            let gw =
                ArrayView2::from_shape((slot.fan_out, slot.fan_in), &direction[slot.w..slot.b])
                    .expect("layout");
            let gb = ArrayView1::from(&direction[slot.b..slot.b + slot.fan_out]);
            // delta_i^T G a_i + delta_i . g_b
            let proj = deltas[l].dot(&gw);
            let a = &trace.acts[l];
            for r in 0..b {
                let w_term: f64 = proj.row(r).iter().zip(a.row(r)).map(|(p, q)| p * q).sum();
                let b_term: f64 = deltas[l].row(r).dot(&gb);
                out[r] += w_term + b_term;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_is_a_function_of_shape() {
        let a = Architecture::new(2, vec![3, 4], 0).unwrap();
        // (4 -> 3) + (3 -> 4) + (4 -> 2)
        assert_eq!(a.param_count(), 4 * 3 + 3 + 3 * 4 + 4 + 4 * 2 + 2);
        let c = Architecture::new(2, vec![3, 4], 5).unwrap();
        assert_eq!(c.param_count(), a.param_count() + 5 * 3);
        let linear = Architecture::new(3, vec![], 0).unwrap();
        assert_eq!(linear.param_count(), 5 * 3 + 3);
        assert_eq!(
            VelocityModel::init(a.clone(), 1).params().len(),
            a.param_count()
        );
    }

    #[test]
    fn init_is_seeded() {
        let a = Architecture::new(2, vec![8], 0).unwrap();
        assert_eq!(
            VelocityModel::init(a.clone(), 3),
            VelocityModel::init(a.clone(), 3)
        );
        assert_ne!(VelocityModel::init(a.clone(), 3), VelocityModel::init(a, 4));
    }

    #[test]
    fn conditional_inputs_validate_labels() {
        let a = Architecture::new(1, vec![2], 2).unwrap();
        let m = VelocityModel::init(a, 0);
        let x = Array2::zeros((1, 1));
        assert!(m.velocity_batch(x.view(), &[0.5], None).is_err());
        assert!(m.velocity_batch(x.view(), &[0.5], Some(&[2])).is_err());
        assert!(m.velocity_batch(x.view(), &[0.5], Some(&[1])).is_ok());
    }
}
