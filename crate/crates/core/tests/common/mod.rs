#![allow(dead_code)]

use diffprune::diffusion::{per_sample_grad, Architecture, VelocityField, VelocityModel};
use diffprune::Result;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact marginal velocity of the linear interpolant when the data are
/// `N(mean, std^2 I)`: the flow map is `x(t) = (1 - t) mean + sigma_t x1`
/// with `sigma_t^2 = (1 - t)^2 std^2 + t^2`, so integrating from `x1` at
/// `t = 1` ends exactly at `mean + std * x1`. As `std -> 0` this is the
/// point-mass field `v = (x - mean) / t - mean`.
pub struct GaussianDataField {
    pub mean: Vec<f64>,
    pub std: f64,
}

impl GaussianDataField {
    pub fn endpoint(&self, x1: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x1.to_owned() * self.std;
        for mut row in out.rows_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        out
    }
}

impl VelocityField for GaussianDataField {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn velocity(
        &self,
        x: ArrayView2<'_, f64>,
        t: f64,
        _labels: Option<&[usize]>,
    ) -> Result<Array2<f64>> {
        let s2 = self.std * self.std;
        let var = (1.0 - t).powi(2) * s2 + t * t;
        let coef = (t - (1.0 - t) * s2) / var;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v = -m + coef * (*v - (1.0 - t) * m);
            }
        }
        Ok(out)
    }
}

/// Max absolute endpoint error of the Heun sampler with `steps` steps.
pub fn heun_error(field: &GaussianDataField, steps: usize, seed: u64) -> f64 {
    let x1 = diffprune::diffusion::initial_noise(64, field.dim(), seed);
    let exact = field.endpoint(x1.view());
    let got = diffprune::diffusion::integrate_heun(field, x1, steps, None).unwrap();
    (&got - &exact).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Empirical convergence orders `log2(err(N) / err(2N))` for N in `steps`.
pub fn heun_orders(field: &GaussianDataField, steps: &[usize]) -> Vec<f64> {
    steps
        .iter()
        .map(|&n| (heun_error(field, n, 3) / heun_error(field, 2 * n, 3)).log2())
        .collect()
}

/// Relative error used by the gradient checks: `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Loop-only MLP forward pass, independent of the ndarray implementation.
pub fn scalar_velocity(model: &VelocityModel, x: &[f64], t: f64, label: Option<usize>) -> Vec<f64> {
    let arch = model.architecture();
    let p = model.params();
    let mut input: Vec<f64> = x.to_vec();
    input.push(t);
    input.push(1.0 - t);
    for c in 0..arch.label_count {
        input.push(if Some(c) == label { 1.0 } else { 0.0 });
    }
    let mut widths = vec![input.len()];
    widths.extend(&arch.hidden);
    widths.push(arch.dim);
    let mut offset = 0;
    let mut act = input;
    for l in 0..widths.len() - 1 {
        let (fin, fout) = (widths[l], widths[l + 1]);
        let w = &p[offset..offset + fin * fout];
        let b = &p[offset + fin * fout..offset + fin * fout + fout];
        offset += fin * fout + fout;
        let mut next = vec![0.0; fout];
        for o in 0..fout {
            let mut z = b[o];
            for i in 0..fin {
                z += w[o * fin + i] * act[i];
            }
            next[o] = if l + 2 < widths.len() { z.tanh() } else { z };
        }
        act = next;
    }
    act
}

pub fn scalar_loss(
    model: &VelocityModel,
    x0: &[f64],
    x1: &[f64],
    t: f64,
    label: Option<usize>,
) -> f64 {
    let xt: Vec<f64> = x0
        .iter()
        .zip(x1)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect();
    let v = scalar_velocity(model, &xt, t, label);
    v.iter()
        .zip(x0.iter().zip(x1))
        .map(|(v, (a, b))| (v - (b - a)).powi(2))
        .sum()
}

pub fn random_model(rng: &mut ChaCha8Rng, labels: usize) -> VelocityModel {
    let dim = rng.random_range(1..=3);
    let depth = rng.random_range(0..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
    let arch = Architecture::new(dim, hidden, labels).unwrap();
    let init = VelocityModel::init(arch.clone(), rng.random());
    // perturb biases too so every parameter matters
    let params: Vec<f64> = init
        .params()
        .iter()
        .map(|p| p + 0.3 * (rng.random::<f64>() - 0.5))
        .collect();
    VelocityModel::from_params(arch, params, init.seed()).unwrap()
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect()
}

/// Worst per-coordinate relative error between the analytic gradient and
/// central differences (h = 1e-5) of the scalar loss, over `probes` random
/// architectures, parameters, samples and times.
pub fn max_fd_relative_error(probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for probe in 0..probes {
        let labels = if probe % 3 == 0 { 2 } else { 0 };
        let model = random_model(&mut rng, labels);
        let d = model.dim();
        let x0 = gauss_vec(&mut rng, d);
        let x1 = gauss_vec(&mut rng, d);
        let t = rng.random_range(0.02..0.98);
        let label = (labels > 0).then(|| rng.random_range(0..labels));
        let grad = per_sample_grad(&model, &x0, &x1, t, label).unwrap();
        let arch = model.architecture().clone();
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = model.params().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let lp = scalar_loss(
                &VelocityModel::from_params(arch.clone(), plus, 0).unwrap(),
                &x0,
                &x1,
                t,
                label,
            );
            let lm = scalar_loss(
                &VelocityModel::from_params(arch.clone(), minus, 0).unwrap(),
                &x0,
                &x1,
                t,
                label,
            );
            worst = worst.max(rel_err(g, (lp - lm) / (2.0 * h)));
        }
    }
    worst
}
