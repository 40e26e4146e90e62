//! Scoring a set of generated samples against the reference split.

use ndarray::ArrayView2;

use super::config::Metric;
use crate::datasets::Mixture;
use crate::error::{Error, Result};
use crate::metrics::{
    f_score, fit_gaussian, frechet_distance, inception_score, knn_precision_recall,
    memorization_distance, vendi_score, MetricsReport,
};

/// What a generated sample set is compared against.
pub struct EvalContext<'a> {
    /// Held-out reference split (FID, precision/recall).
    pub reference: ArrayView2<'a, f64>,
    /// Training universe (memorization distance).
    pub train: ArrayView2<'a, f64>,
    /// Class posterior source for the Inception score.
    pub mixture: Option<&'a Mixture>,
    pub k_nn: usize,
}

/// Compute every requested metric; the report's `config` and `seed` are
/// left for the caller to fill in.
pub fn evaluate_samples(
    gen: ArrayView2<'_, f64>,
    ctx: &EvalContext<'_>,
    metrics: &[Metric],
) -> Result<MetricsReport> {
    if gen.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            "generated samples contain non-finite values",
        ));
    }
    let mut report = MetricsReport::default();
    for metric in metrics {
        match metric {
            Metric::Fid => {
                let a = fit_gaussian(ctx.reference)?;
                let b = fit_gaussian(gen)?;
                report.fid = Some(frechet_distance(&a, &b)?);
            }
            Metric::Prd => {
                let (p, r) = knn_precision_recall(ctx.reference, gen, ctx.k_nn)?;
                report.precision = Some(p);
                report.recall = Some(r);
                report.f_score = Some(f_score(p, r));
            }
            Metric::Vendi => report.vendi = Some(vendi_score(gen)?),
            Metric::Inception => {
                let mixture = ctx
                    .mixture
                    .ok_or_else(|| Error::invalid("inception score needs a mixture posterior"))?;
                report.inception = Some(inception_score(mixture.posterior(gen)?.view())?);
            }
            Metric::Memorization => {
                report.mem_distance = Some(memorization_distance(gen, ctx.train)?.0)
            }
        }
    }
    report.validate()?;
    Ok(report)
}
