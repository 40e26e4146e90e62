//! Experiment configuration: a line-oriented `key = value` text format with
//! dotted section keys.
//!
//! Every field has a default, so an empty file is a valid (default) sweep.
//! The canonical rendering lists every key in sorted order with normalized
//! values; its SHA-256 names the run directory, so two configs that differ
//! in any field never share results.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::diffusion::{default_hidden, TrainConfig};
use crate::error::{Error, Result};
use crate::pruning::{ClusterPolicy, Direction};

/// Source of the training universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Eight isotropic Gaussians evenly spaced on a circle.
    Ring8,
    /// Four Gaussians on the corners of a square with weights 0.7/0.1/0.1/0.1.
    Skewed4,
    /// Two interleaved half circles.
    Moons,
    /// Features read from a CSV file.
    Csv,
}

impl DatasetKind {
    pub fn is_mixture(self) -> bool {
        matches!(self, DatasetKind::Ring8 | DatasetKind::Skewed4)
    }

    fn default_clusters(self) -> usize {
        match self {
            DatasetKind::Ring8 => 8,
            DatasetKind::Skewed4 => 4,
            DatasetKind::Moons => 2,
            DatasetKind::Csv => 8,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Ring8 => "ring8",
            DatasetKind::Skewed4 => "skewed4",
            DatasetKind::Moons => "moons",
            DatasetKind::Csv => "csv",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring8" => Ok(DatasetKind::Ring8),
            "skewed4" => Ok(DatasetKind::Skewed4),
            "moons" => Ok(DatasetKind::Moons),
            "csv" => Ok(DatasetKind::Csv),
            other => Err(Error::invalid(format!(
                "unknown dataset kind {other:?} (expected ring8, skewed4, moons or csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Total samples drawn for synthetic kinds (training universe plus
    /// reference split). Ignored for CSV input.
    pub n: usize,
    pub path: Option<PathBuf>,
    /// Whether the last CSV column holds integer labels.
    pub labels: bool,
    /// Optional CSV of per-row embeddings used for clustering.
    pub embeddings: Option<PathBuf>,
    /// Fraction held out as the metric reference split before any pruning.
    pub holdout: f64,
}

/// Registered scoring methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Random,
    Monotonicity,
    Grand,
    El2n,
    Moso,
    Cluster,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Random,
        Method::Monotonicity,
        Method::Grand,
        Method::El2n,
        Method::Moso,
        Method::Cluster,
    ];

    /// Whether the scorer consumes the shared pretraining phase.
    pub fn needs_pretraining(self) -> bool {
        matches!(self, Method::Monotonicity | Method::Grand | Method::El2n)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Random => "random",
            Method::Monotonicity => "monotonicity",
            Method::Grand => "grand",
            Method::El2n => "el2n",
            Method::Moso => "moso",
            Method::Cluster => "cluster",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// A scorer plus how its table is resolved into a subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodSpec {
    pub method: Method,
    pub direction: Direction,
    pub policy: ClusterPolicy,
}

impl MethodSpec {
    pub fn new(method: Method, direction: Direction, policy: ClusterPolicy) -> Self {
        Self {
            method,
            direction,
            policy,
        }
    }

    /// Directory-safe label, identical to the manifest method tag.
    pub fn label(&self) -> String {
        match self.policy {
            ClusterPolicy::None => format!("{}-{}", self.method, self.direction),
            p => format!("{}-{}-{}", self.method, self.direction, p),
        }
    }

    pub fn needs_clusters(&self) -> bool {
        self.method == Method::Cluster || self.policy != ClusterPolicy::None
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.method, self.direction, self.policy)
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// `method[:direction[:policy]]`, defaulting to `top` and `none`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() > 3 || parts[0].is_empty() {
            return Err(Error::invalid(format!(
                "method spec {s:?} is not method[:direction[:policy]]"
            )));
        }
        let method = parts[0].parse()?;
        let direction = parts.get(1).map_or(Ok(Direction::Top), |d| d.parse())?;
        let policy = parts
            .get(2)
            .map_or(Ok(ClusterPolicy::None), |p| p.parse())?;
        if policy == ClusterPolicy::Balanced && method != Method::Cluster {
            return Err(Error::invalid(format!(
                "balanced selection ranks by cluster distance; use `cluster:{direction}:balanced` instead of {s:?}"
            )));
        }
        Ok(Self::new(method, direction, policy))
    }
}

/// Metric families a sweep can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Fid,
    /// k-NN precision, recall and their F-score.
    Prd,
    Vendi,
    Inception,
    Memorization,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Fid,
        Metric::Prd,
        Metric::Vendi,
        Metric::Inception,
        Metric::Memorization,
    ];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Fid => "fid",
            Metric::Prd => "prd",
            Metric::Vendi => "vendi",
            Metric::Inception => "inception",
            Metric::Memorization => "memorization",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    pub methods: Vec<MethodSpec>,
    /// Strictly increasing pruning ratios in `[0, 1)`.
    pub prs: Vec<f64>,
    pub hidden: Vec<usize>,
    /// Training recipe; its `seed` is replaced by a per-seed derived value.
    pub train: TrainConfig,
    pub sample_steps: usize,
    pub n_gen: usize,
    pub metrics: Vec<Metric>,
    pub k_nn: usize,
    pub clusters: usize,
    pub moso_surrogates: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let kind = DatasetKind::Ring8;
        Self {
            seeds: vec![0],
            dataset: DatasetSpec {
                kind,
                n: 4096,
                path: None,
                labels: false,
                embeddings: None,
                holdout: 0.2,
            },
            methods: default_methods(),
            prs: vec![0.0, 0.25, 0.5, 0.75, 0.9],
            hidden: default_hidden(),
            train: TrainConfig::default(),
            sample_steps: 50,
            n_gen: 2048,
            metrics: default_metrics(kind),
            k_nn: crate::metrics::DEFAULT_K_NN,
            clusters: kind.default_clusters(),
            moso_surrogates: 4,
        }
    }
}

/// Every scorer with both directions; random has a single direction since
/// its inverse is the same distribution.
pub fn default_methods() -> Vec<MethodSpec> {
    let mut out = vec![MethodSpec::new(
        Method::Random,
        Direction::Top,
        ClusterPolicy::None,
    )];
    for m in [
        Method::Monotonicity,
        Method::Grand,
        Method::El2n,
        Method::Moso,
    ] {
        for d in [Direction::Top, Direction::Bottom] {
            out.push(MethodSpec::new(m, d, ClusterPolicy::None));
        }
    }
    for d in [Direction::Top, Direction::Bottom] {
        out.push(MethodSpec::new(
            Method::Cluster,
            d,
            ClusterPolicy::Proportional,
        ));
    }
    out
}

/// All metrics, minus Inception when no class posterior is available.
pub fn default_metrics(kind: DatasetKind) -> Vec<Metric> {
    Metric::ALL
        .into_iter()
        .filter(|m| *m != Metric::Inception || kind.is_mixture())
        .collect()
}

fn parse_list<T: FromStr<Err = E>, E: fmt::Display>(
    value: &str,
) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_one<T: FromStr<Err = E>, E: fmt::Display>(value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|e| format!("{value:?}: {e}"))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parse the `key = value` format. Blank lines and `#` comments are
    /// ignored; unknown and duplicated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (u64, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key {key:?}"),
                });
            }
        }
        let pairs = entries.into_iter().map(|(k, (line, v))| (k, line, v));
        Self::from_pairs(pairs)
    }

    /// Build a config from `(key, line, value)` triples; `line` is only used
    /// in error messages (0 when the pair did not come from a file).
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, u64, String)>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut metrics_set = false;
        let mut clusters_set = false;
        for (key, line, value) in pairs {
            cfg.apply(&key, &value, &mut metrics_set, &mut clusters_set)
                .map_err(|message| Error::Parse {
                    line,
                    message: format!("{key}: {message}"),
                })?;
        }
        if !metrics_set {
            cfg.metrics = default_metrics(cfg.dataset.kind);
        }
        if !clusters_set {
            cfg.clusters = cfg.dataset.kind.default_clusters();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.with_context(path.display().to_string()))
    }

    /// Override or add a single key, re-validating the result. Changing
    /// `dataset.kind` also moves the metric list and cluster count along
    /// with it when they were still at the previous kind's defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut pairs = self.to_pairs();
        if key == "dataset.kind" {
            let old = self.dataset.kind;
            let new: DatasetKind = value.parse()?;
            if self.metrics == default_metrics(old) {
                pairs.insert("eval.metrics".into(), join(&default_metrics(new)));
            }
            if self.clusters == old.default_clusters() {
                pairs.insert("cluster.k".into(), new.default_clusters().to_string());
            }
        }
        pairs.insert(key.to_string(), value.to_string());
        *self = Self::from_pairs(pairs.into_iter().map(|(k, v)| (k, 0, v)))?;
        Ok(())
    }

    fn apply(
        &mut self,
        key: &str,
        value: &str,
        metrics_set: &mut bool,
        clusters_set: &mut bool,
    ) -> std::result::Result<(), String> {
        let t = &mut self.train;
        match key {
            "seeds" => self.seeds = parse_list(value)?,
            "dataset.kind" => self.dataset.kind = parse_one(value)?,
            "dataset.n" => self.dataset.n = parse_one(value)?,
            "dataset.path" => self.dataset.path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "dataset.labels" => self.dataset.labels = parse_one(value)?,
            "dataset.embeddings" => {
                self.dataset.embeddings = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            "dataset.holdout" => self.dataset.holdout = parse_one(value)?,
            "methods" => self.methods = parse_list(value)?,
            "prs" => self.prs = parse_list(value)?,
            "model.hidden" => self.hidden = parse_list(value)?,
            "train.steps" => t.steps = parse_one(value)?,
            "train.batch_size" => t.batch_size = parse_one(value)?,
            "train.learning_rate" => t.learning_rate = parse_one(value)?,
            "train.pretrain_epochs" => t.pretrain_epochs = parse_one(value)?,
            "train.probe_timestep" => t.probe_timestep = parse_one(value)?,
            "train.log_every" => t.log_every = parse_one(value)?,
            "sample.steps" => self.sample_steps = parse_one(value)?,
            "eval.n_gen" => self.n_gen = parse_one(value)?,
            "eval.metrics" => {
                self.metrics = parse_list(value)?;
                *metrics_set = true;
            }
            "eval.k_nn" => self.k_nn = parse_one(value)?,
            "cluster.k" => {
                self.clusters = parse_one(value)?;
                *clusters_set = true;
            }
            "moso.surrogates" => self.moso_surrogates = parse_one(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.prs.is_empty() {
            return bad("at least one pruning ratio is required".into());
        }
        if let Some(pr) = self.prs.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return bad(format!("pruning ratios must lie in [0, 1), got {pr}"));
        }
        if self.prs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("pruning ratios must be strictly increasing".into());
        }
        let ds = &self.dataset;
        if !(ds.holdout > 0.0 && ds.holdout < 1.0) {
            return bad(format!(
                "dataset.holdout must lie in (0, 1), got {}",
                ds.holdout
            ));
        }
        if ds.kind == DatasetKind::Csv && ds.path.is_none() {
            return bad("dataset.kind = csv needs dataset.path".into());
        }
        if ds.kind != DatasetKind::Csv && ds.n < 10 {
            return bad(format!("dataset.n must be at least 10, got {}", ds.n));
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        self.train.validate()?;
        if self.sample_steps == 0 {
            return bad("sample.steps must be >= 1".into());
        }
        if self.n_gen < 2 {
            return bad("eval.n_gen must be >= 2".into());
        }
        if self.metrics.is_empty() {
            return bad("at least one metric is required".into());
        }
        if self.metrics.contains(&Metric::Inception) && !ds.kind.is_mixture() {
            return bad(format!(
                "inception needs a class posterior, which only mixture datasets provide (dataset.kind = {})",
                ds.kind
            ));
        }
        if self.k_nn == 0 || self.k_nn >= self.n_gen {
            return bad(format!(
                "eval.k_nn must lie in [1, n_gen), got {}",
                self.k_nn
            ));
        }
        if self.clusters == 0 {
            return bad("cluster.k must be >= 1".into());
        }
        if self.moso_surrogates == 0 {
            return bad("moso.surrogates must be >= 1".into());
        }
        Ok(())
    }

    /// Every field as a `(key, canonical value)` pair in sorted key order.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let ds = &self.dataset;
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let t = &self.train;
        [
            ("seeds", join(&self.seeds)),
            ("dataset.kind", ds.kind.to_string()),
            ("dataset.n", ds.n.to_string()),
            ("dataset.path", path(&ds.path)),
            ("dataset.labels", ds.labels.to_string()),
            ("dataset.embeddings", path(&ds.embeddings)),
            ("dataset.holdout", ds.holdout.to_string()),
            ("methods", join(&self.methods)),
            ("prs", join(&self.prs)),
            ("model.hidden", join(&self.hidden)),
            ("train.steps", t.steps.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.pretrain_epochs", t.pretrain_epochs.to_string()),
            ("train.probe_timestep", t.probe_timestep.to_string()),
            ("train.log_every", t.log_every.to_string()),
            ("sample.steps", self.sample_steps.to_string()),
            ("eval.n_gen", self.n_gen.to_string()),
            ("eval.metrics", join(&self.metrics)),
            ("eval.k_nn", self.k_nn.to_string()),
            ("cluster.k", self.clusters.to_string()),
            ("moso.surrogates", self.moso_surrogates.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Canonical text: every key, sorted, one per line.
    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(
            ExperimentConfig::parse("# nothing\n\n").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = ExperimentConfig::parse(
            "seeds = 3, 1\nmethods = grand:bottom, cluster:top:balanced\nprs = 0, 0.5\ndataset.kind = skewed4\n",
        )
        .unwrap();
        assert_eq!(cfg.metrics.len(), 5);
        assert_eq!(cfg.clusters, 4);
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn any_field_change_changes_the_hash() {
        let base = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        seen.insert(base.hash());
        for (k, v) in [
            ("seeds", "1"),
            ("dataset.n", "4000"),
            ("dataset.holdout", "0.25"),
            ("methods", "random"),
            ("prs", "0,0.5"),
            ("model.hidden", "64,64"),
            ("train.steps", "10"),
            ("train.batch_size", "8"),
            ("train.learning_rate", "0.01"),
            ("train.pretrain_epochs", "3"),
            ("train.probe_timestep", "0.2"),
            ("train.log_every", "7"),
            ("sample.steps", "20"),
            ("eval.n_gen", "100"),
            ("eval.metrics", "fid"),
            ("eval.k_nn", "5"),
            ("cluster.k", "3"),
            ("moso.surrogates", "1"),
        ] {
            let mut cfg = base.clone();
            cfg.set(k, v).unwrap();
            assert!(seen.insert(cfg.hash()), "{k} did not change the hash");
        }
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("seeds = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ExperimentConfig::parse("seeds = 1\nseeds = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(ExperimentConfig::parse("prs = 0.5, 0.25").is_err());
        assert!(ExperimentConfig::parse("prs = 1.0").is_err());
        assert!(ExperimentConfig::parse("methods = grand:top:balanced").is_err());
        assert!(ExperimentConfig::parse("methods = nope").is_err());
        assert!(ExperimentConfig::parse("dataset.kind = moons\neval.metrics = inception").is_err());
        assert!(ExperimentConfig::parse("dataset.kind = csv").is_err());
    }

    #[test]
    fn method_specs_parse_with_defaults() {
        let m: MethodSpec = "el2n".parse().unwrap();
        assert_eq!(
            m,
            MethodSpec::new(Method::El2n, Direction::Top, ClusterPolicy::None)
        );
        assert_eq!(m.label(), "el2n-top");
        let c: MethodSpec = "cluster:middle:proportional".parse().unwrap();
        assert_eq!(c.label(), "cluster-middle-proportional");
        assert_eq!(c.to_string().parse::<MethodSpec>().unwrap(), c);
        assert_eq!(default_methods().len(), 11);
    }
}
