use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// One isotropic Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub mean: Vec<f64>,
    pub std: f64,
    pub weight: f64,
}

/// A validated isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    modes: Vec<Mode>,
    dim: usize,
}

impl Mixture {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::invalid("mixture needs at least one mode"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::invalid("mode mean must have dimension >= 1"));
        }
        let mut total = 0.0;
        for (i, m) in modes.iter().enumerate() {
            if m.mean.len() != dim {
                return Err(Error::Shape {
                    context: format!("mean of mode {i}"),
                    expected: dim,
                    actual: m.mean.len(),
                });
            }
            if !(m.std > 0.0 && m.std.is_finite()) {
                return Err(Error::invalid(format!(
                    "mode {i}: stddev must be > 0, got {}",
                    m.std
                )));
            }
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(Error::invalid(format!(
                    "mode {i}: weight must be > 0, got {}",
                    m.weight
                )));
            }
            if m.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("mode {i}: non-finite mean")));
            }
            total += m.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mode weights must sum to 1, got {total}"
            )));
        }
        Ok(Self { modes, dim })
    }

    /// `k` equal-weight modes evenly spaced on a circle in the plane.
    pub fn ring(k: usize, radius: f64, std: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("ring needs k >= 1"));
        }
        let modes = (0..k)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / k as f64;
                Mode {
                    mean: vec![radius * a.cos(), radius * a.sin()],
                    std,
                    weight: 1.0 / k as f64,
                }
            })
            .collect();
        Self::new(modes)
    }

    /// Four modes on the corners of a square of half-side `half`, with the
    /// given weights (first weight is the dominant subpopulation).
    pub fn square(half: f64, std: f64, weights: [f64; 4]) -> Result<Self> {
        let corners = [(half, half), (-half, half), (-half, -half), (half, -half)];
        let modes = corners
            .iter()
            .zip(weights)
            .map(|(&(x, y), weight)| Mode {
                mean: vec![x, y],
                std,
                weight,
            })
            .collect();
        Self::new(modes)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        gen_gaussian_mixture(n, self.dim, &self.modes, seed)
    }

    /// Exact posterior `p(mode | x)` for each row of `x`, computed in log space.
    pub fn posterior(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::Shape {
                context: "posterior input".into(),
                expected: self.dim,
                actual: x.ncols(),
            });
        }
        let k = self.modes.len();
        let d = self.dim as f64;
        let mut out = Array2::zeros((x.nrows(), k));
        let mut logp = vec![0.0; k];
        for (r, row) in x.rows().into_iter().enumerate() {
            for (c, m) in self.modes.iter().enumerate() {
                let sq: f64 = row.iter().zip(&m.mean).map(|(a, b)| (a - b).powi(2)).sum();
                logp[c] = m.weight.ln() - d * m.std.ln() - 0.5 * sq / (m.std * m.std);
            }
            let mx = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logp.iter().map(|l| (l - mx).exp()).sum();
            for c in 0..k {
                out[[r, c]] = (logp[c] - mx).exp() / z;
            }
        }
        Ok(out)
    }
}

/// Draw `n` i.i.d. samples from an isotropic Gaussian mixture. Labels are
/// the index of the generating mode.
pub fn gen_gaussian_mixture(n: usize, d: usize, modes: &[Mode], seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mixture = Mixture::new(modes.to_vec())?;
    if mixture.dim != d {
        return Err(Error::Shape {
            context: "mixture dimension".into(),
            expected: d,
            actual: mixture.dim,
        });
    }
    let cumulative: Vec<f64> = modes
        .iter()
        .scan(0.0, |acc, m| {
            *acc += m.weight;
            Some(*acc)
        })
        .collect();
    let mut rng = rng::stream(seed);
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for mut row in features.rows_mut() {
        let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
        let c = cumulative
            .iter()
            .position(|&w| u < w)
            .unwrap_or(modes.len() - 1);
        let m = &modes[c];
        for (x, mu) in row.iter_mut().zip(&m.mean) {
            let z: f64 = rng.sample(StandardNormal);
            *x = mu + m.std * z;
        }
        labels.push(c);
    }
    Dataset::new(features, Some(labels))
}

/// Two interleaved unit half-circles with Gaussian jitter, `n/2` points each.
///
/// The upper moon is `(cos a, sin a)` and the lower moon is
/// `(1 - cos a, 0.5 - sin a)` for `a` evenly spaced on `[0, pi]`.
pub fn gen_two_moons(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "two moons needs a positive even n, got {n}"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!(
            "noise_std must be >= 0, got {noise_std}"
        )));
    }
    let half = n / 2;
    let step = if half > 1 {
        PI / (half - 1) as f64
    } else {
        0.0
    };
    let mut rng = rng::stream(seed);
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let moon = i / half;
        let a = (i % half) as f64 * step;
        let (x, y) = if moon == 0 {
            (a.cos(), a.sin())
        } else {
            (1.0 - a.cos(), 0.5 - a.sin())
        };
        let (jx, jy): (f64, f64) = if noise_std > 0.0 {
            (rng.sample(StandardNormal), rng.sample(StandardNormal))
        } else {
            (0.0, 0.0)
        };
        features[[i, 0]] = x + noise_std * jx;
        features[[i, 1]] = y + noise_std * jy;
        labels.push(moon);
    }
    Dataset::new(features, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_all_label_zero() {
        let modes = [Mode {
            mean: vec![0.0],
            std: 1.0,
            weight: 1.0,
        }];
        let ds = gen_gaussian_mixture(4, 1, &modes, 7).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.labels().unwrap(), &[0, 0, 0, 0]);
    }

    #[test]
    fn ring_mode_counts_within_binomial_bound() {
        let mix = Mixture::ring(8, 5.0, 0.3).unwrap();
        let ds = mix.sample(1000, 1).unwrap();
        let mut counts = [0usize; 8];
        for &l in ds.labels().unwrap() {
            counts[l] += 1;
        }
        // Binomial(1000, 1/8): mean 125, sd sqrt(1000 * 1/8 * 7/8) = 10.458
        let sd = (1000.0f64 * 0.125 * 0.875).sqrt();
        for c in counts {
            assert!((c as f64 - 125.0).abs() <= 5.0 * sd, "count {c}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let mix = Mixture::ring(8, 5.0, 0.3).unwrap();
        assert_eq!(mix.sample(1000, 1).unwrap(), mix.sample(1000, 1).unwrap());
        assert_ne!(mix.sample(50, 1).unwrap(), mix.sample(50, 2).unwrap());
        assert_eq!(
            gen_two_moons(200, 0.05, 3).unwrap(),
            gen_two_moons(200, 0.05, 3).unwrap()
        );
    }

    #[test]
    fn mixture_argument_errors() {
        let bad_std = [Mode {
            mean: vec![0.0],
            std: 0.0,
            weight: 1.0,
        }];
        assert!(gen_gaussian_mixture(4, 1, &bad_std, 0).is_err());
        let good = [Mode {
            mean: vec![0.0],
            std: 1.0,
            weight: 1.0,
        }];
        assert!(gen_gaussian_mixture(0, 1, &good, 0).is_err());
        let bad_w = [
            Mode {
                mean: vec![0.0],
                std: 1.0,
                weight: 0.5,
            },
            Mode {
                mean: vec![1.0],
                std: 1.0,
                weight: 0.4,
            },
        ];
        assert!(gen_gaussian_mixture(4, 1, &bad_w, 0).is_err());
    }

    #[test]
    fn noiseless_moons_lie_on_arcs() {
        let ds = gen_two_moons(4, 0.0, 0).unwrap();
        let x = ds.features();
        for r in 0..2 {
            let (a, b) = (x[[r, 0]], x[[r, 1]]);
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
            assert!(b >= -1e-12);
        }
        for r in 2..4 {
            let (a, b) = (x[[r, 0]] - 1.0, x[[r, 1]] - 0.5);
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
            assert!(b <= 1e-12);
        }
    }

    #[test]
    fn moons_label_balance_and_odd_n() {
        let ds = gen_two_moons(200, 0.05, 3).unwrap();
        let ones = ds.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 100);
        assert!(gen_two_moons(5, 0.1, 0).is_err());
    }

    #[test]
    fn posterior_rows_are_distributions() {
        let mix = Mixture::square(2.5, 1.0, [0.7, 0.1, 0.1, 0.1]).unwrap();
        let ds = mix.sample(64, 4).unwrap();
        let p = mix.posterior(ds.features()).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        // far into the first corner the first mode dominates
        let far = ndarray::array![[50.0, 50.0]];
        assert!(mix.posterior(far.view()).unwrap()[[0, 0]] > 0.999);
    }
}
