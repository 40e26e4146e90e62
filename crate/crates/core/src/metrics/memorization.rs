use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Distance from every generated row to its nearest training row, and the mean.
pub fn memorization_distance(
    gen: ArrayView2<'_, f64>,
    train: ArrayView2<'_, f64>,
) -> Result<(f64, Vec<f64>)> {
    if train.nrows() == 0 {
        return Err(Error::invalid("training set must be non-empty"));
    }
    if gen.nrows() == 0 {
        return Err(Error::invalid("generated set must be non-empty"));
    }
    if gen.ncols() != train.ncols() {
        return Err(Error::Shape {
            context: "memorization feature dimension".into(),
            expected: train.ncols(),
            actual: gen.ncols(),
        });
    }
    let per_sample: Vec<f64> = gen
        .rows()
        .into_iter()
        .map(|g| {
            train
                .rows()
                .into_iter()
                .map(|t| {
                    g.iter()
                        .zip(t.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok((mean, per_sample))
}
