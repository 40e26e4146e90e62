use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-8;

/// `exp(mean_i KL(p(y|x_i) || p(y)))` with `p(y)` the mean row.
///
/// Rows are class probabilities from any classifier; for synthetic mixtures
/// the exact mixture posterior plays that role.
pub fn inception_score(probs: ArrayView2<'_, f64>) -> Result<f64> {
    let (m, c) = probs.dim();
    if m == 0 || c == 0 {
        return Err(Error::invalid(
            "inception score needs a non-empty probability matrix",
        ));
    }
    for (r, row) in probs.rows().into_iter().enumerate() {
        if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid(format!(
                "row {r} has a negative or non-finite probability"
            )));
        }
        if (row.sum() - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::invalid(format!(
                "row {r} sums to {}, not 1",
                row.sum()
            )));
        }
    }
    let marginal = probs.mean_axis(Axis(0)).expect("m >= 1");
    let mean_kl = probs
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(marginal.iter())
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, &q)| p * (p / q).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / m as f64;
    Ok(mean_kl.exp().max(1.0))
}
