//! Browser front end for the pruning laboratory.
//!
//! Each exported operation takes plain numbers and strings and returns a
//! JSON document for the page to draw. The `*_json` functions hold the logic
//! and are usable (and tested) natively; the `#[wasm_bindgen]` wrappers only
//! convert errors into JavaScript exceptions.

use diffprune::datasets::{Dataset, Mixture, SubsetManifest};
use diffprune::diffusion::{sample_ode, train, Architecture, TrainConfig, VelocityModel};
use diffprune::metrics::{
    fit_gaussian, frechet_distance, knn_precision_recall, memorization_distance, vendi_score,
};
use diffprune::pruning::{
    cluster_histogram, kmeans_fit, score_cluster_distance, score_random, select_balanced_clusters,
    select_by_score, select_proportional_clusters, ClusterModel, ClusterPolicy, Direction,
    SelectionSpec,
};
use ndarray::ArrayView2;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 4000;
const MAX_STEPS: usize = 4000;

type DemoResult<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn preset(name: &str) -> DemoResult<Mixture> {
    match name {
        "ring8" => Mixture::ring(8, 5.0, 0.3).map_err(err),
        "skewed4" => Mixture::square(2.5, 1.0, [0.7, 0.1, 0.1, 0.1]).map_err(err),
        other => Err(format!(
            "unknown dataset {other:?} (expected ring8 or skewed4)"
        )),
    }
}

fn check_size(n: usize) -> DemoResult<()> {
    if !(16..=MAX_POINTS).contains(&n) {
        return Err(format!("n must lie in 16..={MAX_POINTS}, got {n}"));
    }
    Ok(())
}

fn points(x: ArrayView2<'_, f64>) -> Vec<[f64; 2]> {
    x.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

fn clusters_for(ds: &Dataset, k: usize, seed: u64) -> DemoResult<ClusterModel> {
    kmeans_fit(ds.clustering_space(), k, seed, 300, 1e-8).map_err(err)
}

/// Score `ds` with `method` ("random" or "cluster") and select a subset.
fn select(
    ds: &Dataset,
    method: &str,
    direction: &str,
    policy: &str,
    pr: f64,
    k: usize,
    seed: u64,
) -> DemoResult<(SubsetManifest, Option<ClusterModel>)> {
    let direction: Direction = direction.parse().map_err(err)?;
    let policy: ClusterPolicy = policy.parse().map_err(err)?;
    let needs_clusters = method == "cluster" || policy != ClusterPolicy::None;
    let cm = if needs_clusters {
        Some(clusters_for(ds, k, seed)?)
    } else {
        None
    };
    let table = match method {
        "random" => score_random(ds.len(), seed).map_err(err)?,
        "cluster" => score_cluster_distance(cm.as_ref().unwrap()).map_err(err)?,
        other => {
            return Err(format!(
                "unknown method {other:?} (expected random or cluster)"
            ))
        }
    };
    let spec = SelectionSpec::new(table.method_tag(), pr, direction, policy).with_seed(seed);
    let manifest = match policy {
        ClusterPolicy::None => select_by_score(&table, &spec),
        ClusterPolicy::Proportional => {
            select_proportional_clusters(&table, cm.as_ref().unwrap(), &spec)
        }
        ClusterPolicy::Balanced => select_balanced_clusters(cm.as_ref().unwrap(), direction, seed),
    }
    .map_err(err)?;
    Ok((manifest, cm))
}

/// Draw a dataset, score it and show which samples survive pruning.
pub fn preview_selection_json(
    dataset: &str,
    n: usize,
    method: &str,
    direction: &str,
    policy: &str,
    pr: f64,
    seed: u64,
) -> DemoResult<String> {
    check_size(n)?;
    let mixture = preset(dataset)?;
    let ds = mixture.sample(n, seed).map_err(err)?;
    let (manifest, cm) = select(
        &ds,
        method,
        direction,
        policy,
        pr,
        mixture.modes().len(),
        seed,
    )?;
    let kept: Vec<bool> = (0..ds.len()).map(|i| manifest.contains(i)).collect();
    let doc = json!({
        "points": points(ds.features()),
        "kept": kept,
        "cluster": cm.as_ref().map(|c| c.assignment.clone()),
        "kept_count": manifest.len(),
        "pruning_ratio": manifest.pruning_ratio(),
    });
    Ok(doc.to_string())
}

/// Per-cluster sample counts on the skewed dataset under proportional and
/// balanced cluster-aware selection.
pub fn cluster_balance_json(n: usize, pr: f64, seed: u64) -> DemoResult<String> {
    check_size(n)?;
    let mixture = preset("skewed4")?;
    let ds = mixture.sample(n, seed).map_err(err)?;
    let cm = clusters_for(&ds, 4, seed)?;
    let table = score_cluster_distance(&cm).map_err(err)?;
    let spec = SelectionSpec::new(
        table.method_tag(),
        pr,
        Direction::Top,
        ClusterPolicy::Proportional,
    );
    let proportional = select_proportional_clusters(&table, &cm, &spec).map_err(err)?;
    let balanced = select_balanced_clusters(&cm, Direction::Top, seed).map_err(err)?;
    let counts = |m: &SubsetManifest| {
        let kept: Vec<usize> = m.kept_ids().iter().map(|&i| cm.assignment[i]).collect();
        cluster_histogram(&kept, cm.k)
    };
    let doc = json!({
        "points": points(ds.features()),
        "cluster": cm.assignment,
        "train": cm.sizes(),
        "proportional": counts(&proportional),
        "proportional_pr": proportional.pruning_ratio(),
        "balanced": counts(&balanced),
        "balanced_pr": balanced.pruning_ratio(),
    });
    Ok(doc.to_string())
}

/// Prune, train a small model on the kept samples, generate and evaluate.
#[allow(clippy::too_many_arguments)]
pub fn train_and_sample_json(
    dataset: &str,
    n: usize,
    method: &str,
    direction: &str,
    pr: f64,
    steps: usize,
    n_gen: usize,
    seed: u64,
) -> DemoResult<String> {
    check_size(n)?;
    check_size(n_gen)?;
    if !(1..=MAX_STEPS).contains(&steps) {
        return Err(format!("steps must lie in 1..={MAX_STEPS}, got {steps}"));
    }
    let mixture = preset(dataset)?;
    let ds = mixture.sample(n, seed).map_err(err)?;
    let reference = mixture.sample(n, seed.wrapping_add(1)).map_err(err)?;
    let (manifest, _) = select(
        &ds,
        method,
        direction,
        "none",
        pr,
        mixture.modes().len(),
        seed,
    )?;
    let arch = Architecture::new(2, vec![64, 64], 0).map_err(err)?;
    let cfg = TrainConfig {
        steps,
        batch_size: 128,
        learning_rate: 3e-3,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(VelocityModel::init(arch, seed), &ds, &manifest, &cfg).map_err(err)?;
    let gen = sample_ode(&outcome.model, n_gen, 40, seed, None).map_err(err)?;
    let fid = frechet_distance(
        &fit_gaussian(reference.features()).map_err(err)?,
        &fit_gaussian(gen.view()).map_err(err)?,
    )
    .map_err(err)?;
    let (precision, recall) =
        knn_precision_recall(reference.features(), gen.view(), 3).map_err(err)?;
    let kept = ds.subset(&manifest).map_err(err)?;
    let (mem, _) = memorization_distance(gen.view(), kept.features()).map_err(err)?;
    let metrics: Value = json!({
        "fid": fid,
        "precision": precision,
        "recall": recall,
        "vendi": vendi_score(gen.view()).map_err(err)?,
        "memorization": mem,
    });
    let doc = json!({
        "train": points(kept.features()),
        "samples": points(gen.view()),
        "loss_curve": outcome.loss_curve,
        "kept_count": manifest.len(),
        "metrics": metrics,
    });
    Ok(doc.to_string())
}

#[wasm_bindgen]
pub fn preview_selection(
    dataset: &str,
    n: usize,
    method: &str,
    direction: &str,
    policy: &str,
    pr: f64,
    seed: u32,
) -> Result<String, JsError> {
    preview_selection_json(dataset, n, method, direction, policy, pr, seed.into())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cluster_balance(n: usize, pr: f64, seed: u32) -> Result<String, JsError> {
    cluster_balance_json(n, pr, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn train_and_sample(
    dataset: &str,
    n: usize,
    method: &str,
    direction: &str,
    pr: f64,
    steps: usize,
    n_gen: usize,
    seed: u32,
) -> Result<String, JsError> {
    train_and_sample_json(dataset, n, method, direction, pr, steps, n_gen, seed.into())
        .map_err(|e| JsError::new(&e))
}
