//! The resumable method × pruning-ratio × seed sweep.
//!
//! Layout of a run directory (`<root>/<config hash>/`):
//!
//! ```text
//! config.txt                      canonical config
//! seed-<s>/data/{train,reference}.csv
//! seed-<s>/shared/scores-<method>.csv, clusters.json
//! seed-<s>/cells/<label>/pr-<pr>/{manifest.json, model.json, loss.csv, samples.csv, report.json}
//! curves/<metric>.csv
//! ```
//!
//! A cell is complete once its `report.json` exists; completed cells are
//! skipped on rerun. A failing cell writes `error.txt` and the sweep moves
//! on.
//!
//! Seeds: every cell of master seed `s` shares the training-universe split,
//! the model initialization (`derive_seed(s, "cell-init", "")`), the batch
//! and flow-noise streams (`"cell-train"`) and the sampler noise
//! (`"cell-sample"`), so cells differ only in their subset.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Method, MethodSpec};
use super::curves::{emit_curves, CurvePoint};
use super::data::{load_universe, preset_mixture, split_reference};
use super::evaluate::{evaluate_samples, EvalContext};
use crate::datasets::{
    save_dataset_csv, save_manifest, save_matrix_csv, Dataset, Mixture, SubsetManifest,
};
use crate::diffusion::{
    pretrain_trace, sample_ode, save_model, train, Architecture, LossTrace, TrainConfig,
    VelocityModel,
};
use crate::error::{Error, Result};
use crate::metrics::{load_report, save_report, MetricsReport};
use crate::persist;
use crate::pruning::{
    kmeans_fit_with, load_clusters, load_scores, save_clusters, save_scores,
    score_cluster_distance, score_el2n, score_grand, score_monotonicity, score_moso, score_random,
    select_balanced_clusters, select_by_score, select_proportional_clusters, ClusterModel,
    ClusterPolicy, KMeansConfig, ScoreTable, SelectionSpec,
};
use crate::rng::derive_seed;

/// Environment variable naming the directory that holds run directories.
pub const RUN_ROOT_ENV: &str = "DIFFPRUNE_RUN_ROOT";

/// `$DIFFPRUNE_RUN_ROOT`, or `./runs` when unset.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

pub fn run_dir(root: &Path, cfg: &ExperimentConfig) -> PathBuf {
    root.join(cfg.hash())
}

/// Identifies one cell of a sweep.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub seed: u64,
    /// Method label such as `grand-top`, or `unpruned`.
    pub method: String,
    /// Pruning ratio as written in the config, or `balanced`.
    pub pr: String,
}

impl CellKey {
    pub fn dir(&self, run_dir: &Path) -> PathBuf {
        seed_dir(run_dir, self.seed)
            .join("cells")
            .join(&self.method)
            .join(format!("pr-{}", self.pr))
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "seed {} / {} / pr {}", self.seed, self.method, self.pr)
    }
}

pub(crate) fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

/// What a cell does: keep everything, or resolve a method at a ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CellPlan {
    Unpruned,
    Method(MethodSpec, f64),
    Balanced(MethodSpec),
}

fn plan_cells(cfg: &ExperimentConfig, seed: u64) -> Vec<(CellKey, CellPlan)> {
    let key = |method: String, pr: String| CellKey { seed, method, pr };
    let mut out = Vec::new();
    if cfg.prs.contains(&0.0) {
        out.push((key("unpruned".into(), "0".into()), CellPlan::Unpruned));
    }
    for m in &cfg.methods {
        if m.policy == ClusterPolicy::Balanced {
            out.push((key(m.label(), "balanced".into()), CellPlan::Balanced(*m)));
            continue;
        }
        for &pr in cfg.prs.iter().filter(|&&p| p > 0.0) {
            out.push((key(m.label(), pr.to_string()), CellPlan::Method(*m, pr)));
        }
    }
    out
}

/// Every cell key a config expands to, in execution order.
pub fn cell_keys(cfg: &ExperimentConfig) -> Vec<CellKey> {
    cfg.seeds
        .iter()
        .flat_map(|&s| plan_cells(cfg, s).into_iter().map(|(k, _)| k))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: std::result::Result<MetricsReport, String>,
    /// True when the report was loaded from a previous run.
    pub resumed: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub run_dir: PathBuf,
    pub cells: Vec<CellResult>,
    pub curves: Vec<CurvePoint>,
}

impl SweepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.cells.iter().all(|c| c.outcome.is_ok())
    }

    pub fn failures(&self) -> Vec<(&CellKey, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (&c.key, e.as_str())))
            .collect()
    }

    /// Number of cells computed (not resumed) in this invocation.
    pub fn computed(&self) -> usize {
        self.cells.iter().filter(|c| !c.resumed).count()
    }

    pub fn report(&self, key: &CellKey) -> Option<&MetricsReport> {
        self.cells
            .iter()
            .find(|c| &c.key == key)
            .and_then(|c| c.outcome.as_ref().ok())
    }
}

/// Lazily materialized per-seed state shared by the cells of one seed.
struct SeedContext<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    dir: PathBuf,
    data: Option<std::result::Result<(Dataset, Dataset), String>>,
    mixture: Option<Mixture>,
    pretrained: Option<std::result::Result<(LossTrace, VelocityModel), String>>,
    tables: BTreeMap<Method, std::result::Result<ScoreTable, String>>,
    clusters: Option<std::result::Result<ClusterModel, String>>,
}

impl<'a> SeedContext<'a> {
    fn new(cfg: &'a ExperimentConfig, run_dir: &Path, seed: u64) -> Self {
        Self {
            cfg,
            seed,
            dir: seed_dir(run_dir, seed),
            data: None,
            mixture: preset_mixture(cfg.dataset.kind),
            pretrained: None,
            tables: BTreeMap::new(),
            clusters: None,
        }
    }

    fn arch(&self, dim: usize) -> Result<Architecture> {
        Architecture::new(dim, self.cfg.hidden.clone(), 0)
    }

    fn data(&mut self) -> Result<&(Dataset, Dataset)> {
        if self.data.is_none() {
            let built = (|| {
                let universe = load_universe(&self.cfg.dataset, self.seed)?;
                let (train, reference) =
                    split_reference(&universe, self.cfg.dataset.holdout, self.seed)?;
                let data_dir = self.dir.join("data");
                fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;
                save_dataset_csv(&train, data_dir.join("train.csv"))?;
                save_dataset_csv(&reference, data_dir.join("reference.csv"))?;
                Ok::<_, Error>((train, reference))
            })();
            self.data = Some(built.map_err(|e| format!("data preparation failed: {e}")));
        }
        self.data
            .as_ref()
            .unwrap()
            .as_ref()
            .map_err(|e| Error::invalid(e.clone()))
    }

    fn pretrained(&mut self) -> Result<&(LossTrace, VelocityModel)> {
        if self.pretrained.is_none() {
            let built = (|| {
                let train_ds = self.data()?.0.clone();
                let cfg = TrainConfig {
                    seed: derive_seed(self.seed, "pretrain", ""),
                    ..self.cfg.train.clone()
                };
                let init = VelocityModel::init(
                    self.arch(train_ds.dim())?,
                    derive_seed(self.seed, "pretrain-init", ""),
                );
                log::info!(
                    "seed {}: shared pretraining ({} epochs)",
                    self.seed,
                    cfg.pretrain_epochs
                );
                pretrain_trace(init, &train_ds, &cfg)
            })();
            self.pretrained = Some(built.map_err(|e| format!("pretraining failed: {e}")));
        }
        self.pretrained
            .as_ref()
            .unwrap()
            .as_ref()
            .map_err(|e| Error::invalid(e.clone()))
    }

    fn clusters(&mut self) -> Result<&ClusterModel> {
        if self.clusters.is_none() {
            let built = (|| {
                let path = self.dir.join("shared").join("clusters.json");
                if path.exists() {
                    return load_clusters(&path);
                }
                let train_ds = self.data()?.0.clone();
                let kcfg =
                    KMeansConfig::new(self.cfg.clusters, derive_seed(self.seed, "kmeans", ""));
                let cm = kmeans_fit_with(train_ds.clustering_space(), &kcfg)?;
                save_clusters(&cm, &path)?;
                Ok::<_, Error>(cm)
            })();
            self.clusters = Some(built.map_err(|e| format!("clustering failed: {e}")));
        }
        self.clusters
            .as_ref()
            .unwrap()
            .as_ref()
            .map_err(|e| Error::invalid(e.clone()))
    }

    fn table(&mut self, method: Method) -> Result<ScoreTable> {
        if !self.tables.contains_key(&method) {
            let built = self.build_table(method);
            self.tables.insert(
                method,
                built.map_err(|e| format!("{method} scoring failed: {e}")),
            );
        }
        self.tables[&method].clone().map_err(Error::invalid)
    }

    fn build_table(&mut self, method: Method) -> Result<ScoreTable> {
        let path = self.dir.join("shared").join(format!("scores-{method}.csv"));
        if path.exists() {
            return load_scores(&path);
        }
        let seed = self.seed;
        let table = match method {
            Method::Random => {
                score_random(self.data()?.0.len(), derive_seed(seed, "score-random", ""))?
            }
            Method::Monotonicity => score_monotonicity(&self.pretrained()?.0)?,
            Method::Grand | Method::El2n => {
                let train_ds = self.data()?.0.clone();
                let (trace, model) = self.pretrained()?;
                if method == Method::Grand {
                    score_grand(model, &train_ds, &trace.probe())?
                } else {
                    score_el2n(model, &train_ds, &trace.probe())?
                }
            }
            Method::Moso => {
                let train_ds = self.data()?.0.clone();
                let cfg = TrainConfig {
                    seed: derive_seed(seed, "moso-probe", ""),
                    ..self.cfg.train.clone()
                };
                let arch = self.arch(train_ds.dim())?;
                log::info!(
                    "seed {seed}: training {} MoSo surrogates",
                    self.cfg.moso_surrogates
                );
                score_moso(
                    &train_ds,
                    &arch,
                    &cfg,
                    self.cfg.moso_surrogates,
                    derive_seed(seed, "moso", ""),
                )?
            }
            Method::Cluster => score_cluster_distance(self.clusters()?)?,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        save_scores(&table, &path)?;
        Ok(table)
    }

    fn manifest(&mut self, plan: CellPlan) -> Result<SubsetManifest> {
        let seed = self.seed;
        match plan {
            CellPlan::Unpruned => SubsetManifest::full(self.data()?.0.len(), seed),
            CellPlan::Balanced(m) => select_balanced_clusters(self.clusters()?, m.direction, seed),
            CellPlan::Method(m, pr) => {
                let table = self.table(m.method)?;
                let spec = SelectionSpec::new(m.method.to_string(), pr, m.direction, m.policy)
                    .with_seed(seed);
                match m.policy {
                    ClusterPolicy::None => select_by_score(&table, &spec),
                    ClusterPolicy::Proportional => {
                        let cm = self.clusters()?.clone();
                        select_proportional_clusters(&table, &cm, &spec)
                    }
                    ClusterPolicy::Balanced => unreachable!("planned as a balanced cell"),
                }
            }
        }
    }

    fn run_cell(
        &mut self,
        key: &CellKey,
        plan: CellPlan,
        cell_dir: &Path,
    ) -> Result<MetricsReport> {
        let manifest = self.manifest(plan)?;
        save_manifest(&manifest, cell_dir.join("manifest.json"))?;
        let (train_ds, reference) = self.data()?.clone();
        let seed = self.seed;
        let arch = self.arch(train_ds.dim())?;
        let cfg = TrainConfig {
            seed: derive_seed(seed, "cell-train", ""),
            ..self.cfg.train.clone()
        };
        let init = VelocityModel::init(arch, derive_seed(seed, "cell-init", ""));
        let outcome = train(init, &train_ds, &manifest, &cfg)?;
        save_model(&outcome.model, cell_dir.join("model.json"))?;
        write_loss_curve(
            &outcome.loss_curve,
            cfg.log_every,
            &cell_dir.join("loss.csv"),
        )?;

        let samples = sample_ode(
            &outcome.model,
            self.cfg.n_gen,
            self.cfg.sample_steps,
            derive_seed(seed, "cell-sample", ""),
            None,
        )?;
        save_matrix_csv(samples.view(), "x", cell_dir.join("samples.csv"))?;

        let ctx = EvalContext {
            reference: reference.features(),
            train: train_ds.features(),
            mixture: self.mixture.as_ref(),
            k_nn: self.cfg.k_nn,
        };
        let mut report = evaluate_samples(samples.view(), &ctx, &self.cfg.metrics)?;
        report.seed = seed;
        report.config = BTreeMap::from([
            ("cell".to_string(), key.to_string()),
            ("config_hash".to_string(), self.cfg.hash()),
            ("kept".to_string(), manifest.len().to_string()),
            ("method".to_string(), key.method.clone()),
            (
                "pruning_ratio".to_string(),
                manifest.pruning_ratio().to_string(),
            ),
            ("train_size".to_string(), train_ds.len().to_string()),
        ]);
        Ok(report)
    }
}

fn write_loss_curve(curve: &[f64], every: usize, path: &Path) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (i, l) in curve.iter().enumerate() {
        text.push_str(&format!("{},{}\n", (i + 1) * every, l));
    }
    persist::write_atomic(path, text.as_bytes())
}

/// Run (or resume) every cell of `cfg` under `root/<hash>/`.
///
/// Only configuration and I/O problems with the run directory itself are
/// returned as errors; stage failures are recorded per cell.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<SweepOutcome> {
    cfg.validate()?;
    let dir = run_dir(root, cfg);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    persist::write_atomic(&dir.join("config.txt"), cfg.to_text().as_bytes())?;
    log::info!("run directory {}", dir.display());

    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        let mut ctx = SeedContext::new(cfg, &dir, seed);
        for (key, plan) in plan_cells(cfg, seed) {
            let cell_dir = key.dir(&dir);
            let report_path = cell_dir.join("report.json");
            if report_path.exists() {
                match load_report(&report_path) {
                    Ok(report) => {
                        log::info!("{key}: complete, skipping");
                        cells.push(CellResult {
                            key,
                            outcome: Ok(report),
                            resumed: true,
                        });
                        continue;
                    }
                    Err(e) => log::warn!("{key}: unreadable report ({e}), recomputing"),
                }
            }
            log::info!("{key}: running");
            let error_path = cell_dir.join("error.txt");
            let outcome = fs::create_dir_all(&cell_dir)
                .map_err(|e| Error::io(&cell_dir, e))
                .and_then(|_| ctx.run_cell(&key, plan, &cell_dir))
                .and_then(|report| save_report(&report, &report_path).map(|_| report));
            let outcome = match outcome {
                Ok(report) => {
                    let _ = fs::remove_file(&error_path);
                    Ok(report)
                }
                Err(e) => {
                    let message = e.to_string();
                    log::error!("{key}: {message}");
                    let _ = persist::write_atomic(&error_path, format!("{message}\n").as_bytes());
                    Err(message)
                }
            };
            cells.push(CellResult {
                key,
                outcome,
                resumed: false,
            });
        }
    }

    let curves = if cells.iter().any(|c| c.outcome.is_ok()) {
        emit_curves(&dir)?
    } else {
        Vec::new()
    };
    Ok(SweepOutcome {
        run_dir: dir,
        cells,
        curves,
    })
}

/// Recompute a single cell from scratch in `workdir` (nothing is reused
/// from any earlier run) and return its report.
pub fn recompute_cell(
    cfg: &ExperimentConfig,
    key: &CellKey,
    workdir: &Path,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let (_, plan) = plan_cells(cfg, key.seed)
        .into_iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::invalid(format!("cell {key} is not part of this config")))?;
    let mut ctx = SeedContext::new(cfg, workdir, key.seed);
    let cell_dir = key.dir(workdir);
    fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
    ctx.run_cell(key, plan, &cell_dir)
}
