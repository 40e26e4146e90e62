//! Resolving score tables into subset manifests.
//!
//! Every selection ranks ids by `(score desc, id asc)` and then takes a
//! window of `m` ranks: `top` takes ranks `[0, m)`, `bottom` takes
//! `[len - m, len)` and `middle` takes `[floor((len - m) / 2), +m)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::kmeans::ClusterModel;
use super::scores::score_cluster_distance;
use super::table::ScoreTable;
use crate::datasets::SubsetManifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Top,
    Bottom,
    Middle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterPolicy {
    None,
    Proportional,
    Balanced,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Top => "top",
            Direction::Bottom => "bottom",
            Direction::Middle => "middle",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(Direction::Top),
            "bottom" => Ok(Direction::Bottom),
            "middle" => Ok(Direction::Middle),
            other => Err(Error::invalid(format!("unknown direction {other:?}"))),
        }
    }
}

impl fmt::Display for ClusterPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterPolicy::None => "none",
            ClusterPolicy::Proportional => "proportional",
            ClusterPolicy::Balanced => "balanced",
        })
    }
}

impl FromStr for ClusterPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ClusterPolicy::None),
            "proportional" => Ok(ClusterPolicy::Proportional),
            "balanced" => Ok(ClusterPolicy::Balanced),
            other => Err(Error::invalid(format!("unknown cluster policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub method_tag: String,
    pub pruning_ratio: f64,
    pub direction: Direction,
    pub cluster_policy: ClusterPolicy,
    pub seed: u64,
}

impl SelectionSpec {
    pub fn new(
        method_tag: impl Into<String>,
        pruning_ratio: f64,
        direction: Direction,
        cluster_policy: ClusterPolicy,
    ) -> Self {
        Self {
            method_tag: method_tag.into(),
            pruning_ratio,
            direction,
            cluster_policy,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check_ratio(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pruning_ratio) {
            return Err(Error::invalid(format!(
                "pruning ratio must lie in [0, 1), got {}",
                self.pruning_ratio
            )));
        }
        Ok(())
    }

    fn tag(&self) -> String {
        match self.cluster_policy {
            ClusterPolicy::None => format!("{}-{}", self.method_tag, self.direction),
            policy => format!("{}-{}-{}", self.method_tag, self.direction, policy),
        }
    }
}

/// `round(n * (1 - pr))`, halves rounded away from zero.
pub fn kept_count(n: usize, pruning_ratio: f64) -> usize {
    (n as f64 * (1.0 - pruning_ratio)).round() as usize
}

fn window(ranked: &[usize], m: usize, direction: Direction) -> &[usize] {
    let len = ranked.len();
    let m = m.min(len);
    match direction {
        Direction::Top => &ranked[..m],
        Direction::Bottom => &ranked[len - m..],
        Direction::Middle => {
            let start = (len - m) / 2;
            &ranked[start..start + m]
        }
    }
}

/// Global selection on a score table.
pub fn select_by_score(table: &ScoreTable, spec: &SelectionSpec) -> Result<SubsetManifest> {
    if spec.cluster_policy != ClusterPolicy::None {
        return Err(Error::invalid(
            "select_by_score needs cluster policy `none`",
        ));
    }
    spec.check_ratio()?;
    let m = kept_count(table.len(), spec.pruning_ratio);
    if m == 0 {
        return Err(Error::invalid("pruned to zero samples"));
    }
    let ranked = table.ranking(0..table.len());
    let kept = window(&ranked, m, spec.direction).to_vec();
    SubsetManifest::new(kept, spec.pruning_ratio, spec.tag(), spec.seed)
}

/// Largest-remainder quotas: `sizes[c] * keep_fraction`, floored, with the
/// residue handed out by descending fractional part (lower cluster index
/// first on ties) so the quotas sum to `target`.
pub fn proportional_quotas(sizes: &[usize], keep_fraction: f64, target: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * keep_fraction).collect();
    let mut quotas: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(q, &s)| (q.floor() as usize).min(s))
        .collect();
    let assigned: usize = quotas.iter().sum();
    let mut residue = target.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    while residue > 0 {
        let before = residue;
        for &c in &order {
            if residue == 0 {
                break;
            }
            if quotas[c] < sizes[c] {
                quotas[c] += 1;
                residue -= 1;
            }
        }
        if residue == before {
            break;
        }
    }
    quotas
}

fn check_table_matches(table: &ScoreTable, cm: &ClusterModel) -> Result<()> {
    if table.len() != cm.assignment.len() {
        return Err(Error::Shape {
            context: "score table vs cluster assignment".into(),
            expected: cm.assignment.len(),
            actual: table.len(),
        });
    }
    Ok(())
}

/// Per-cluster selection with quotas proportional to cluster size.
pub fn select_proportional_clusters(
    table: &ScoreTable,
    cm: &ClusterModel,
    spec: &SelectionSpec,
) -> Result<SubsetManifest> {
    if spec.cluster_policy != ClusterPolicy::Proportional {
        return Err(Error::invalid(
            "select_proportional_clusters needs cluster policy `proportional`",
        ));
    }
    spec.check_ratio()?;
    check_table_matches(table, cm)?;
    let n = table.len();
    let target = kept_count(n, spec.pruning_ratio);
    if target == 0 {
        return Err(Error::invalid("pruned to zero samples"));
    }
    let members = cm.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = proportional_quotas(&sizes, 1.0 - spec.pruning_ratio, target);
    let mut kept = Vec::with_capacity(target);
    for (c, ids) in members.into_iter().enumerate() {
        if quotas[c] == 0 && sizes[c] > 0 {
            log::warn!(
                "cluster {c} ({} samples) fully pruned at PR {}",
                sizes[c],
                spec.pruning_ratio
            );
            continue;
        }
        let ranked = table.ranking(ids);
        kept.extend_from_slice(window(&ranked, quotas[c], spec.direction));
    }
    SubsetManifest::new(kept, spec.pruning_ratio, spec.tag(), spec.seed)
}

/// Keep exactly `s` samples from every cluster, where `s` is the size of
/// the smallest cluster; ranking within a cluster is by distance to the
/// center. The recorded pruning ratio is `1 - s * k / n`.
pub fn select_balanced_clusters(
    cm: &ClusterModel,
    direction: Direction,
    seed: u64,
) -> Result<SubsetManifest> {
    let table = score_cluster_distance(cm)?;
    let members = cm.members();
    let s = members.iter().map(Vec::len).min().unwrap_or(0);
    if s == 0 {
        return Err(Error::invalid(
            "balanced selection needs non-empty clusters",
        ));
    }
    let mut kept = Vec::with_capacity(s * cm.k);
    for ids in members {
        let ranked = table.ranking(ids);
        kept.extend_from_slice(window(&ranked, s, direction));
    }
    let n = cm.assignment.len();
    let ratio = 1.0 - (s * cm.k) as f64 / n as f64;
    let spec =
        SelectionSpec::new("cluster", ratio, direction, ClusterPolicy::Balanced).with_seed(seed);
    SubsetManifest::new(kept, ratio, spec.tag(), seed)
}
