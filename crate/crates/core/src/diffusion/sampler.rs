use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::VelocityModel;
use crate::error::{Error, Result};
use crate::rng;

/// Anything that can produce a velocity for a batch of states at one time.
pub trait VelocityField {
    fn dim(&self) -> usize;

    fn velocity(
        &self,
        x: ArrayView2<'_, f64>,
        t: f64,
        labels: Option<&[usize]>,
    ) -> Result<Array2<f64>>;
}

impl VelocityField for VelocityModel {
    fn dim(&self) -> usize {
        VelocityModel::dim(self)
    }

    fn velocity(
        &self,
        x: ArrayView2<'_, f64>,
        t: f64,
        labels: Option<&[usize]>,
    ) -> Result<Array2<f64>> {
        let ts = vec![t; x.nrows()];
        self.velocity_batch(x, &ts, labels)
    }
}

/// Draw `count` standard-normal starting points from the sampling stream of `seed`.
pub fn initial_noise(count: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::derived_stream(seed, "sample-noise", "");
    Array2::from_shape_simple_fn((count, dim), || rng.sample(StandardNormal))
}

/// Integrate `dx/dt = v(x, t)` from `t = 1` to `t = 0` with `steps` fixed
/// Heun steps, starting from the given states.
pub fn integrate_heun<F: VelocityField + ?Sized>(
    field: &F,
    start: Array2<f64>,
    steps: usize,
    labels: Option<&[usize]>,
) -> Result<Array2<f64>> {
    if steps == 0 {
        return Err(Error::invalid("sampler needs at least one step"));
    }
    let h = 1.0 / steps as f64;
    let mut x = start;
    for k in 0..steps {
        let t = 1.0 - k as f64 * h;
        let t_next = if k + 1 == steps {
            0.0
        } else {
            1.0 - (k + 1) as f64 * h
        };
        let dt = t_next - t;
        let v0 = field.velocity(x.view(), t, labels)?;
        let predictor = &x + &(&v0 * dt);
        let v1 = field.velocity(predictor.view(), t_next, labels)?;
        x = x + (v0 + v1) * (0.5 * dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite state at sampler step {}",
                k + 1
            )));
        }
    }
    Ok(x)
}

/// Generate `count` samples by integrating the probability-flow ODE from
/// Gaussian noise. Deterministic for a fixed `seed`.
pub fn sample_ode<F: VelocityField + ?Sized>(
    field: &F,
    count: usize,
    steps: usize,
    seed: u64,
    labels: Option<&[usize]>,
) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    if let Some(l) = labels {
        if l.len() != count {
            return Err(Error::Shape {
                context: "sampling labels".into(),
                expected: count,
                actual: l.len(),
            });
        }
    }
    integrate_heun(
        field,
        initial_noise(count, field.dim(), seed),
        steps,
        labels,
    )
}
