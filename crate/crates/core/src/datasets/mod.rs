//! Datasets, synthetic generators, CSV ingestion and subset manifests.

mod generate;
mod io;
mod manifest;

pub use generate::{gen_gaussian_mixture, gen_two_moons, Mixture, Mode};
pub use io::{
    attach_embeddings, load_features_csv, load_matrix_csv, save_dataset_csv, save_matrix_csv,
};
pub use manifest::{load_manifest, save_manifest, SubsetManifest};

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// An ordered collection of feature vectors.
///
/// `ids[r]` is the stable identifier of row `r`. A freshly generated or
/// loaded dataset has `ids == 0..n`; a subset keeps the ids of the rows it
/// was cut from, so row for id `i` in a subset equals row `i` of the parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    embeddings: Option<Array2<f64>>,
    ids: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "dataset must be non-empty, got {n}x{d}"
            )));
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite feature in row {}",
                idx / d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape {
                    context: "labels".into(),
                    expected: n,
                    actual: l.len(),
                });
            }
        }
        Ok(Self {
            features,
            labels,
            embeddings: None,
            ids: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct label values (max label + 1), zero when unlabeled.
    pub fn label_count(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(0)
    }

    pub fn embeddings(&self) -> Option<ArrayView2<'_, f64>> {
        self.embeddings.as_ref().map(|e| e.view())
    }

    /// External embeddings when attached, raw features otherwise.
    pub fn clustering_space(&self) -> ArrayView2<'_, f64> {
        self.embeddings().unwrap_or_else(|| self.features())
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn with_embeddings(mut self, embeddings: Array2<f64>) -> Result<Self> {
        if embeddings.nrows() != self.len() {
            return Err(Error::Shape {
                context: "embeddings rows".into(),
                expected: self.len(),
                actual: embeddings.nrows(),
            });
        }
        if embeddings.ncols() == 0 {
            return Err(Error::invalid("embeddings must have at least one column"));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite embedding value"));
        }
        self.embeddings = Some(embeddings);
        Ok(self)
    }

    /// Rows at the given positions, carrying their ids along.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("pruned to zero samples"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::Bounds {
                id: bad,
                n: self.len(),
            });
        }
        Ok(Self {
            features: self.features.select(Axis(0), rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
            embeddings: self.embeddings.as_ref().map(|e| e.select(Axis(0), rows)),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
        })
    }

    /// Same rows, ids renumbered `0..n`. Used to turn a split into a new universe.
    pub fn reindexed(mut self) -> Self {
        self.ids = (0..self.len()).collect();
        self
    }

    /// Apply a manifest whose ids refer to this dataset's rows.
    pub fn subset(&self, manifest: &SubsetManifest) -> Result<Self> {
        self.select_rows(manifest.kept_ids())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(Dataset::new(Array2::zeros((0, 2)), None).is_err());
        assert!(Dataset::new(array![[1.0, f64::NAN]], None).is_err());
        assert!(Dataset::new(array![[1.0], [2.0]], Some(vec![0])).is_err());
    }

    #[test]
    fn subset_preserves_identity() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0], [3.0]], Some(vec![0, 1, 0, 1])).unwrap();
        let m = SubsetManifest::new(vec![3, 1], 0.5, "t", 0).unwrap();
        let sub = ds.subset(&m).unwrap();
        assert_eq!(sub.ids(), &[1, 3]);
        for (r, &id) in sub.ids().iter().enumerate() {
            assert_eq!(sub.features().row(r), ds.features().row(id));
        }
        assert_eq!(sub.labels().unwrap(), &[1, 1]);
    }

    #[test]
    fn manifest_out_of_bounds_is_caught_at_application() {
        let ds = Dataset::new(array![[0.0], [1.0]], None).unwrap();
        let m = SubsetManifest::new(vec![0, 5], 0.0, "t", 0).unwrap();
        assert!(matches!(ds.subset(&m), Err(Error::Bounds { id: 5, n: 2 })));
    }
}
