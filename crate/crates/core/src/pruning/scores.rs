//! Per-sample importance scorers.

use rand::seq::SliceRandom;
use rand::Rng;

use super::kmeans::ClusterModel;
use super::table::ScoreTable;
use crate::datasets::{Dataset, SubsetManifest};
use crate::diffusion::{
    probe_grad_dots, probe_grad_norms, probe_losses, probe_mean_grad, probe_noise, train,
    Architecture, LossTrace, Probe, TrainConfig, VelocityModel,
};
use crate::error::{Error, Result};
use crate::rng;

/// I.i.d. uniform scores: any direction then keeps a uniformly random subset.
pub fn score_random(n: usize, seed: u64) -> Result<ScoreTable> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let mut rng = rng::derived_stream(seed, "score-random", "");
    ScoreTable::new(
        (0..n).map(|_| rng.random::<f64>()).collect(),
        "random",
        seed,
    )
}

/// Number of epoch-to-epoch increases of each sample's probe loss.
pub fn score_monotonicity(trace: &LossTrace) -> Result<ScoreTable> {
    if trace.epochs() < 2 {
        return Err(Error::invalid(format!(
            "monotonicity needs at least 2 epochs, trace has {}",
            trace.epochs()
        )));
    }
    let scores = trace
        .losses
        .rows()
        .into_iter()
        .map(|row| row.windows(2).into_iter().filter(|w| w[1] > w[0]).count() as f64)
        .collect();
    Ok(ScoreTable::new(scores, "monotonicity", 0)?
        .with_config("epochs", trace.epochs())
        .with_config("probe_timestep", trace.probe_timestep))
}

/// Norm of the parameter gradient of each sample's probe loss.
pub fn score_grand(model: &VelocityModel, ds: &Dataset, probe: &Probe<'_>) -> Result<ScoreTable> {
    let scores = probe_grad_norms(model, ds, probe)?;
    Ok(ScoreTable::new(scores, "grand", model.seed())?.with_config("probe_timestep", probe.t))
}

/// Probe loss of each sample (the squared error magnitude).
pub fn score_el2n(model: &VelocityModel, ds: &Dataset, probe: &Probe<'_>) -> Result<ScoreTable> {
    let scores = probe_losses(model, ds, probe)?;
    Ok(ScoreTable::new(scores, "el2n", model.seed())?.with_config("probe_timestep", probe.t))
}

/// Moving-one-sample-out approximation.
///
/// Trains `surrogates` models on independent random halves of `ds` (same
/// recipe as the pretraining phase: `cfg.pretrain_epochs` epochs). For each
/// surrogate the score contribution of sample `i` is `<g_i, mean_j g_j>`,
/// with all gradients taken at the probe time on the fixed probe noise. The
/// final score is the average over surrogates.
pub fn score_moso(
    ds: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
    surrogates: usize,
    seed: u64,
) -> Result<ScoreTable> {
    cfg.validate()?;
    if surrogates == 0 {
        return Err(Error::invalid("MoSo needs at least one surrogate"));
    }
    let n = ds.len();
    let half = n / 2;
    if half < cfg.batch_size {
        return Err(Error::invalid(format!(
            "MoSo half-subsets of {half} samples are smaller than the batch size {}",
            cfg.batch_size
        )));
    }
    let noise = probe_noise(n, ds.dim(), cfg.seed);
    let probe = Probe {
        noise: noise.view(),
        t: cfg.probe_timestep,
    };
    let mut scores = vec![0.0; n];
    for m in 0..surrogates {
        let scope = m.to_string();
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng::derived_stream(seed, "moso-subset", &scope));
        ids.truncate(half);
        let manifest = SubsetManifest::new(ids, 0.5, "moso-half", seed)?;
        let recipe = TrainConfig {
            steps: cfg.pretrain_epochs.max(1) * half.div_ceil(cfg.batch_size),
            seed: rng::derive_seed(seed, "moso-train", &scope),
            ..cfg.clone()
        };
        let init = VelocityModel::init(arch.clone(), rng::derive_seed(seed, "moso-init", &scope));
        let surrogate = train(init, ds, &manifest, &recipe)?.model;
        let mean = probe_mean_grad(&surrogate, ds, &probe)?;
        let dots = probe_grad_dots(&surrogate, ds, &probe, &mean)?;
        for (s, d) in scores.iter_mut().zip(dots) {
            *s += d / surrogates as f64;
        }
    }
    Ok(ScoreTable::new(scores, "moso", seed)?
        .with_config("surrogates", surrogates)
        .with_config("pretrain_epochs", cfg.pretrain_epochs)
        .with_config("probe_timestep", cfg.probe_timestep))
}

/// Negated distance to the assigned cluster center: `top` keeps the samples
/// nearest their center. Only meaningful with per-cluster selection.
pub fn score_cluster_distance(cm: &ClusterModel) -> Result<ScoreTable> {
    Ok(
        ScoreTable::new(cm.distances.iter().map(|d| -d).collect(), "cluster", 0)?
            .with_config("k", cm.k),
    )
}
