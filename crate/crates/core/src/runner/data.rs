//! Dataset presets and the held-out reference split.

use rand::seq::SliceRandom;

use super::config::{DatasetKind, DatasetSpec};
use crate::datasets::{attach_embeddings, gen_two_moons, load_features_csv, Dataset, Mixture};
use crate::error::{Error, Result};
use crate::rng;

/// Jitter of the two-moons preset.
pub const MOONS_NOISE: f64 = 0.1;

/// The generating mixture of a synthetic preset, if it is one.
///
/// * `ring8`: eight modes on a circle of radius 5, standard deviation 0.3.
/// * `skewed4`: corners of a square of half-side 2.5, standard deviation 1,
///   weights 0.7 / 0.1 / 0.1 / 0.1.
pub fn preset_mixture(kind: DatasetKind) -> Option<Mixture> {
    match kind {
        DatasetKind::Ring8 => Some(Mixture::ring(8, 5.0, 0.3).expect("valid preset")),
        DatasetKind::Skewed4 => {
            Some(Mixture::square(2.5, 1.0, [0.7, 0.1, 0.1, 0.1]).expect("valid preset"))
        }
        DatasetKind::Moons | DatasetKind::Csv => None,
    }
}

/// Whether the stored training/reference CSVs carry a label column.
pub fn has_labels(spec: &DatasetSpec) -> bool {
    spec.kind != DatasetKind::Csv || spec.labels
}

/// Generate (or load) the full universe for one master seed.
pub fn load_universe(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    let data_seed = rng::derive_seed(seed, "data", "");
    let ds = match spec.kind {
        DatasetKind::Ring8 | DatasetKind::Skewed4 => preset_mixture(spec.kind)
            .expect("mixture kind")
            .sample(spec.n, data_seed)?,
        DatasetKind::Moons => gen_two_moons(spec.n, MOONS_NOISE, data_seed)?,
        DatasetKind::Csv => {
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| Error::invalid("dataset.kind = csv needs dataset.path"))?;
            load_features_csv(path, spec.labels)?
        }
    };
    match &spec.embeddings {
        Some(path) => attach_embeddings(ds, path),
        None => Ok(ds),
    }
}

/// Hold out `round(holdout * n)` rows as the reference split, chosen by a
/// seeded permutation. Both parts keep their original row order; the
/// training part is re-indexed so manifests address its rows directly.
pub fn split_reference(ds: &Dataset, holdout: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.len();
    let n_ref = (holdout * n as f64).round() as usize;
    if n_ref < 2 || n_ref + 1 > n {
        return Err(Error::invalid(format!(
            "holdout {holdout} of {n} rows leaves {n_ref} reference rows; need at least 2 and one training row"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derived_stream(seed, "split", ""));
    let mut reference = order[..n_ref].to_vec();
    let mut train = order[n_ref..].to_vec();
    reference.sort_unstable();
    train.sort_unstable();
    Ok((
        ds.select_rows(&train)?.reindexed(),
        ds.select_rows(&reference)?.reindexed(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: DatasetKind, n: usize) -> DatasetSpec {
        DatasetSpec {
            kind,
            n,
            path: None,
            labels: false,
            embeddings: None,
            holdout: 0.2,
        }
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let ds = load_universe(&spec(DatasetKind::Ring8, 100), 4).unwrap();
        let (train, reference) = split_reference(&ds, 0.2, 4).unwrap();
        assert_eq!((train.len(), reference.len()), (80, 20));
        assert_eq!(train.ids(), (0..80).collect::<Vec<_>>().as_slice());
        let mut rows: Vec<Vec<u64>> = train
            .features()
            .rows()
            .into_iter()
            .chain(reference.features().rows())
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        let mut all: Vec<Vec<u64>> = ds
            .features()
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        all.sort();
        assert_eq!(rows, all);
        let again = split_reference(&ds, 0.2, 4).unwrap();
        assert_eq!(again.0, train);
        assert_ne!(split_reference(&ds, 0.2, 5).unwrap().0, train);
    }

    #[test]
    fn presets_are_reproducible_and_labelled() {
        for kind in [DatasetKind::Ring8, DatasetKind::Skewed4, DatasetKind::Moons] {
            let a = load_universe(&spec(kind, 64), 1).unwrap();
            assert_eq!(a, load_universe(&spec(kind, 64), 1).unwrap());
            assert!(a.labels().is_some());
        }
        assert!(split_reference(
            &load_universe(&spec(DatasetKind::Ring8, 10), 0).unwrap(),
            0.01,
            0
        )
        .is_err());
    }
}
