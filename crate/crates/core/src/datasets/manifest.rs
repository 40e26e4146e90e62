use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist;

/// The outcome of a pruning decision: which sample ids are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest")]
pub struct SubsetManifest {
    kept_ids: Vec<usize>,
    pruning_ratio: f64,
    method_tag: String,
    seed: u64,
}

#[derive(Deserialize)]
struct RawManifest {
    kept_ids: Vec<usize>,
    pruning_ratio: f64,
    method_tag: String,
    seed: u64,
}

impl TryFrom<RawManifest> for SubsetManifest {
    type Error = Error;

    fn try_from(raw: RawManifest) -> Result<Self> {
        if raw.kept_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("kept_ids must be strictly increasing"));
        }
        SubsetManifest::new(raw.kept_ids, raw.pruning_ratio, raw.method_tag, raw.seed)
    }
}

impl SubsetManifest {
    /// Ids are sorted on construction; duplicates are rejected.
    pub fn new(
        mut kept_ids: Vec<usize>,
        pruning_ratio: f64,
        method_tag: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&pruning_ratio) {
            return Err(Error::invalid(format!(
                "pruning ratio must lie in [0, 1), got {pruning_ratio}"
            )));
        }
        if kept_ids.is_empty() {
            return Err(Error::invalid("pruned to zero samples"));
        }
        kept_ids.sort_unstable();
        if let Some(w) = kept_ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate kept id {}", w[0])));
        }
        Ok(Self {
            kept_ids,
            pruning_ratio,
            method_tag: method_tag.into(),
            seed,
        })
    }

    /// Keep everything: the unpruned baseline.
    pub fn full(n: usize, seed: u64) -> Result<Self> {
        Self::new((0..n).collect(), 0.0, "unpruned", seed)
    }

    pub fn kept_ids(&self) -> &[usize] {
        &self.kept_ids
    }

    pub fn len(&self) -> usize {
        self.kept_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_ids.is_empty()
    }

    pub fn pruning_ratio(&self) -> f64 {
        self.pruning_ratio
    }

    pub fn method_tag(&self) -> &str {
        &self.method_tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn contains(&self, id: usize) -> bool {
        self.kept_ids.binary_search(&id).is_ok()
    }
}

pub fn save_manifest(m: &SubsetManifest, path: impl AsRef<Path>) -> Result<()> {
    persist::write_json(path.as_ref(), m)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SubsetManifest> {
    persist::read_json(path.as_ref())
}
