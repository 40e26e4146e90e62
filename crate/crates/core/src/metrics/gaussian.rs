use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::linalg::{psd_sqrt, sym_eigenvalues};
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
/// Eigenvalues of the covariance product below this are treated as zero.
const EIG_CLAMP: f64 = 1e-10;

/// Mean and covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    mean: Array1<f64>,
    covariance: Array2<f64>,
}

impl GaussianSummary {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let e = mean.len();
        if covariance.dim() != (e, e) {
            return Err(Error::Shape {
                context: "covariance".into(),
                expected: e,
                actual: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite mean or covariance"));
        }
        let scale = covariance.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for r in 0..e {
            for c in 0..r {
                if (covariance[[r, c]] - covariance[[c, r]]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::numeric(format!(
                        "covariance not symmetric at ({r}, {c})"
                    )));
                }
            }
        }
        if let Some(&min) = sym_eigenvalues(covariance.view())
            .iter()
            .min_by(|a, b| a.total_cmp(b))
        {
            if min < -PSD_TOL * scale {
                return Err(Error::numeric(format!(
                    "covariance not PSD: eigenvalue {min}"
                )));
            }
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased sample covariance of the rows of `x`.
pub fn fit_gaussian(x: ArrayView2<'_, f64>) -> Result<GaussianSummary> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples to fit a Gaussian, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite feature"));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    // exact symmetry
    let e = cov.nrows();
    for r in 0..e {
        for c in 0..r {
            let v = 0.5 * (cov[[r, c]] + cov[[c, r]]);
            cov[[r, c]] = v;
            cov[[c, r]] = v;
        }
    }
    GaussianSummary::new(mean, cov)
}

/// Squared Wasserstein-2 distance between two Gaussians:
/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The trace of the cross term is taken from the eigenvalues of the
/// symmetric matrix `S_a^(1/2) S_b S_a^(1/2)`, which shares its spectrum
/// with `S_a S_b`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            context: "Frechet distance dimension".into(),
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let diff = &a.mean - &b.mean;
    let mean_term = diff.dot(&diff);
    let root_a = psd_sqrt(a.covariance.view());
    let product = root_a.dot(&b.covariance).dot(&root_a);
    let cross: f64 = sym_eigenvalues(product.view())
        .iter()
        .map(|&v| if v < EIG_CLAMP { 0.0 } else { v.sqrt() })
        .sum();
    let trace = a.covariance.diag().sum() + b.covariance.diag().sum() - 2.0 * cross;
    let fid = mean_term + trace;
    if !fid.is_finite() {
        return Err(Error::numeric("non-finite Frechet distance"));
    }
    Ok(fid.max(0.0))
}
