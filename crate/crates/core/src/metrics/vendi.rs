use ndarray::{Array2, ArrayView2};

use super::linalg::sym_eigenvalues;
use crate::error::{Error, Result};

fn normalized_rows(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() == 0 {
        return Err(Error::invalid("vendi score needs at least one sample"));
    }
    let mut out = x.to_owned();
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid(format!(
                "row {r} has zero or non-finite norm"
            )));
        }
        row /= norm;
    }
    Ok(out)
}

fn entropy_exp(eigenvalues: impl IntoIterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = eigenvalues.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    let h: f64 = vals
        .iter()
        .map(|v| v / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    h.exp()
}

/// Vendi score with the cosine kernel: `exp` of the Shannon entropy of the
/// eigenvalues of `K / n`, `K_ij = cos(x_i, x_j)`.
///
/// `K / n = X X^T / n` for unit rows `X` shares its non-zero spectrum with
/// the `e x e` matrix `X^T X / n`, so the smaller of the two is decomposed.
pub fn vendi_score(x: ArrayView2<'_, f64>) -> Result<f64> {
    let unit = normalized_rows(x)?;
    let n = unit.nrows() as f64;
    let small = if unit.ncols() < unit.nrows() {
        unit.t().dot(&unit) / n
    } else {
        unit.dot(&unit.t()) / n
    };
    Ok(entropy_exp(sym_eigenvalues(small.view())))
}

/// Same quantity, always through the `n x n` similarity matrix.
pub fn vendi_score_gram(x: ArrayView2<'_, f64>) -> Result<f64> {
    let unit = normalized_rows(x)?;
    let n = unit.nrows() as f64;
    let k = unit.dot(&unit.t()) / n;
    Ok(entropy_exp(sym_eigenvalues(k.view())))
}
