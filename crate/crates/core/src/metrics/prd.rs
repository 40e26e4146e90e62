use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance from each row to its `k`-th nearest other row.
fn knn_radii_sq(x: ArrayView2<'_, f64>, k: usize) -> Vec<f64> {
    let n = x.nrows();
    let mut buf = Vec::with_capacity(n - 1);
    (0..n)
        .map(|i| {
            buf.clear();
            buf.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| sq_dist(x.row(i), x.row(j))),
            );
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            *kth
        })
        .collect()
}

/// Fraction of `probe` rows that fall inside at least one ball of the
/// manifold spanned by `support` with the given squared radii.
fn coverage(support: ArrayView2<'_, f64>, radii_sq: &[f64], probe: ArrayView2<'_, f64>) -> f64 {
    let inside = probe
        .rows()
        .into_iter()
        .filter(|p| {
            support
                .rows()
                .into_iter()
                .zip(radii_sq)
                .any(|(s, &r)| sq_dist(*p, s) <= r)
        })
        .count();
    inside as f64 / probe.nrows() as f64
}

/// k-NN manifold precision and recall.
///
/// The real manifold is the union of balls around each real point with
/// radius equal to the distance to its `k_nn`-th nearest real neighbour;
/// precision is the fraction of generated points inside it. Recall swaps
/// the roles of the two sets.
pub fn knn_precision_recall(
    real: ArrayView2<'_, f64>,
    gen: ArrayView2<'_, f64>,
    k_nn: usize,
) -> Result<(f64, f64)> {
    if real.ncols() != gen.ncols() {
        return Err(Error::Shape {
            context: "precision/recall feature dimension".into(),
            expected: real.ncols(),
            actual: gen.ncols(),
        });
    }
    if k_nn == 0 {
        return Err(Error::invalid("k_nn must be >= 1"));
    }
    for (name, n) in [("real", real.nrows()), ("generated", gen.nrows())] {
        if k_nn >= n {
            return Err(Error::invalid(format!(
                "k_nn = {k_nn} needs more than {n} {name} samples"
            )));
        }
    }
    let real_radii = knn_radii_sq(real, k_nn);
    let gen_radii = knn_radii_sq(gen, k_nn);
    let precision = coverage(real, &real_radii, gen);
    let recall = coverage(gen, &gen_radii, real);
    Ok((precision, recall))
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn identical_sets_are_fully_covered() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0], [2.0, 5.0]];
        assert_eq!(
            knn_precision_recall(x.view(), x.view(), 2).unwrap(),
            (1.0, 1.0)
        );
    }

    #[test]
    fn far_translation_is_disjoint() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let far = &x + 1e6 * 2f64.sqrt();
        assert_eq!(
            knn_precision_recall(x.view(), far.view(), 1).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn argument_errors() {
        let x = Array2::<f64>::zeros((3, 2));
        assert!(knn_precision_recall(x.view(), x.view(), 3).is_err());
        assert!(knn_precision_recall(x.view(), x.view(), 0).is_err());
        let y = Array2::<f64>::zeros((3, 1));
        assert!(knn_precision_recall(x.view(), y.view(), 1).is_err());
    }

    #[test]
    fn f_score_cases() {
        assert_eq!(f_score(1.0, 1.0), 1.0);
        assert_eq!(f_score(0.0, 0.7), 0.0);
        assert_eq!(f_score(0.0, 0.0), 0.0);
        assert!((f_score(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
    }
}
