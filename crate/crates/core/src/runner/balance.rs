//! Per-cluster histograms of training, kept and generated samples.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::data::has_labels;
use super::sweep::seed_dir;
use crate::datasets::{load_features_csv, load_manifest, load_matrix_csv};
use crate::error::{Error, Result};
use crate::persist;
use crate::pruning::{
    cluster_histogram, kmeans_fit_with, load_clusters, save_clusters, ClusterModel, KMeansConfig,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalanceRow {
    pub cluster: usize,
    pub train_count: usize,
    pub kept_count: usize,
    pub gen_count: usize,
}

/// Histogram table of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceTable {
    pub seed: u64,
    pub method: String,
    pub pr: String,
    pub rows: Vec<BalanceRow>,
}

impl BalanceTable {
    /// `max / min` of the generated per-cluster counts (infinite when a
    /// cluster received no samples).
    pub fn gen_ratio(&self) -> f64 {
        let counts: Vec<usize> = self.rows.iter().map(|r| r.gen_count).collect();
        let max = counts.iter().copied().max().unwrap_or(0) as f64;
        let min = counts.iter().copied().min().unwrap_or(0) as f64;
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn to_csv(&self) -> String {
        let mut text = String::from("cluster,train_count,kept_count,gen_count\n");
        for r in &self.rows {
            text.push_str(&format!(
                "{},{},{},{}\n",
                r.cluster, r.train_count, r.kept_count, r.gen_count
            ));
        }
        text
    }
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

/// Assign the training universe and every cell's generated samples to the
/// nearest cluster center and write `balance/seed-<s>/<method>-pr-<pr>.csv`.
///
/// With `cm = None` each seed uses its sweep's shared clustering (fitted
/// now if no clustering cell ran). The clustering must live in feature
/// space, since generated samples carry no embeddings.
pub fn balance_report(run_dir: &Path, cm: Option<&ClusterModel>) -> Result<Vec<BalanceTable>> {
    let config_path = run_dir.join("config.txt");
    if !config_path.is_file() {
        return Err(Error::invalid(format!(
            "{} is not a run directory",
            run_dir.display()
        )));
    }
    let cfg = ExperimentConfig::load(&config_path)?;
    let mut tables = Vec::new();
    for &seed in &cfg.seeds {
        let sdir = seed_dir(run_dir, seed);
        let train_path = sdir.join("data").join("train.csv");
        if !train_path.is_file() {
            log::warn!("seed {seed}: no training data recorded, skipping");
            continue;
        }
        let train = load_features_csv(&train_path, has_labels(&cfg.dataset))?;
        let owned;
        let cm = match cm {
            Some(cm) => cm,
            None => {
                let path = sdir.join("shared").join("clusters.json");
                owned = if path.is_file() {
                    load_clusters(&path)?
                } else {
                    let kcfg = KMeansConfig::new(cfg.clusters, derive_seed(seed, "kmeans", ""));
                    let fitted = kmeans_fit_with(train.features(), &kcfg)?;
                    save_clusters(&fitted, &path)?;
                    fitted
                };
                &owned
            }
        };
        if cm.centers.ncols() != train.dim() {
            return Err(Error::invalid(format!(
                "clusters live in a {}-dimensional space but samples are {}-dimensional; \
                 balance reports need clusters fitted on raw features",
                cm.centers.ncols(),
                train.dim()
            )));
        }
        let train_assign = cm.assign(train.features())?;
        let train_hist = cluster_histogram(&train_assign, cm.k);

        let cells_dir = sdir.join("cells");
        if !cells_dir.is_dir() {
            continue;
        }
        for method_dir in sorted_subdirs(&cells_dir)? {
            for pr_dir in sorted_subdirs(&method_dir)? {
                let samples_path = pr_dir.join("samples.csv");
                let manifest_path = pr_dir.join("manifest.json");
                if !samples_path.is_file() || !manifest_path.is_file() {
                    continue;
                }
                let manifest = load_manifest(&manifest_path)?;
                let mut kept_hist = vec![0usize; cm.k];
                for &id in manifest.kept_ids() {
                    let c = *train_assign.get(id).ok_or(Error::Bounds {
                        id,
                        n: train_assign.len(),
                    })?;
                    kept_hist[c] += 1;
                }
                let gen = load_matrix_csv(&samples_path)?;
                let gen_hist = cluster_histogram(&cm.assign(gen.view())?, cm.k);
                let method = method_dir
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                let pr_name = pr_dir
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                let pr = pr_name.strip_prefix("pr-").unwrap_or(&pr_name).to_string();
                let table = BalanceTable {
                    seed,
                    method: method.clone(),
                    pr: pr.clone(),
                    rows: (0..cm.k)
                        .map(|c| BalanceRow {
                            cluster: c,
                            train_count: train_hist[c],
                            kept_count: kept_hist[c],
                            gen_count: gen_hist[c],
                        })
                        .collect(),
                };
                let out = run_dir
                    .join("balance")
                    .join(format!("seed-{seed}"))
                    .join(format!("{method}-pr-{pr}.csv"));
                persist::write_atomic(&out, table.to_csv().as_bytes())?;
                tables.push(table);
            }
        }
    }
    if tables.is_empty() {
        return Err(Error::invalid(format!(
            "no generated samples under {}",
            run_dir.display()
        )));
    }
    Ok(tables)
}

/// Group tables by `(method, pr)` across seeds.
pub fn tables_by_cell(tables: &[BalanceTable]) -> BTreeMap<(String, String), Vec<&BalanceTable>> {
    let mut out: BTreeMap<(String, String), Vec<&BalanceTable>> = BTreeMap::new();
    for t in tables {
        out.entry((t.method.clone(), t.pr.clone()))
            .or_default()
            .push(t);
    }
    out
}
