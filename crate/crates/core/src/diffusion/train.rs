use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::flow::{self, Probe};
use super::model::VelocityModel;
use crate::datasets::{Dataset, SubsetManifest};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs of the short pretraining phase used by the scorers.
    pub pretrain_epochs: usize,
    /// Fixed diffusion time at which per-sample probes are evaluated.
    pub probe_timestep: f64,
    /// Steps per averaged loss-curve window.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 256,
            learning_rate: 2e-3,
            seed: 0,
            pretrain_epochs: 5,
            probe_timestep: 0.1,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.probe_timestep > 0.0 && self.probe_timestep < 1.0) {
            return Err(Error::invalid(format!(
                "probe timestep must lie in (0, 1), got {}",
                self.probe_timestep
            )));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log_every must be >= 1"));
        }
        Ok(())
    }
}

/// Per-sample probe losses recorded at the end of every pretraining epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    /// `(n, epochs)`; column `j` holds the losses after epoch `j + 1`.
    pub losses: Array2<f64>,
    /// Probe noise, one row per sample, reused at every epoch.
    pub noise: Array2<f64>,
    pub probe_timestep: f64,
}

impl LossTrace {
    pub fn epochs(&self) -> usize {
        self.losses.ncols()
    }

    pub fn probe(&self) -> Probe<'_> {
        Probe {
            noise: self.noise.view(),
            t: self.probe_timestep,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: VelocityModel,
    /// Mean batch loss over consecutive windows of `log_every` steps.
    pub loss_curve: Vec<f64>,
}

/// Standard-normal probe noise for `n` samples of dimension `d`.
pub fn probe_noise(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::derived_stream(seed, "probe-noise", "");
    Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Minibatch Adam on the flow-matching loss over the rows of one dataset.
struct Trainer<'a> {
    model: VelocityModel,
    adam: Adam,
    data: &'a Dataset,
    batch: usize,
    order: Vec<usize>,
    cursor: usize,
    batch_rng: Stream,
    flow_rng: Stream,
    grad: Vec<f64>,
}

impl<'a> Trainer<'a> {
    fn new(model: VelocityModel, data: &'a Dataset, cfg: &TrainConfig) -> Result<Self> {
        if data.dim() != model.dim() {
            return Err(Error::Shape {
                context: "training data dimension".into(),
                expected: model.dim(),
                actual: data.dim(),
            });
        }
        if model.label_count() > 0 && data.labels().is_none() {
            return Err(Error::invalid("conditional model needs a labeled dataset"));
        }
        let n_params = model.params().len();
        Ok(Self {
            adam: Adam::new(n_params, cfg.learning_rate),
            model,
            data,
            // A pruned subset may be smaller than the configured batch.
            batch: cfg.batch_size.min(data.len()),
            order: (0..data.len()).collect(),
            cursor: data.len(),
            batch_rng: rng::derived_stream(cfg.seed, "batches", ""),
            flow_rng: rng::derived_stream(cfg.seed, "flow", ""),
            grad: vec![0.0; n_params],
        })
    }

    fn next_rows(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.batch_rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch).min(self.order.len());
        let rows = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        rows
    }

    fn steps_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch)
    }

    /// One optimizer step; returns the batch-mean loss.
    fn step(&mut self, step_index: usize) -> Result<f64> {
        let rows = self.next_rows();
        let b = rows.len();
        let x0 = self.data.features().select(Axis(0), &rows);
        let rng = &mut self.flow_rng;
        let noise = Array2::from_shape_simple_fn(x0.dim(), || rng.sample::<f64, _>(StandardNormal));
        let t: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
        let labels: Option<Vec<usize>> = if self.model.label_count() > 0 {
            self.data
                .labels()
                .map(|l| rows.iter().map(|&r| l[r]).collect())
        } else {
            None
        };
        let (trace, resid) =
            flow::residuals(&self.model, x0.view(), noise.view(), &t, labels.as_deref())?;
        let loss = resid.iter().map(|v| v * v).sum::<f64>() / b as f64;
        if !loss.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite training loss at step {step_index}"
            )));
        }
        let deltas = self.model.backward(&trace, resid * (2.0 / b as f64));
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        self.model.accumulate_grad(&trace, &deltas, &mut self.grad);
        self.adam.update(self.model.params_mut(), &self.grad);
        if self.model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite parameter after step {step_index}"
            )));
        }
        Ok(loss)
    }
}

/// Train on the kept rows of `ds` for `cfg.steps` steps. The learning rate
/// follows a cosine decay from `cfg.learning_rate` at the first step to 0
/// after the last, so the final parameters do not carry step-size jitter.
pub fn train(
    model: VelocityModel,
    ds: &Dataset,
    manifest: &SubsetManifest,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(Error::invalid("pruned to zero samples"));
    }
    let kept = ds.subset(manifest)?;
    let mut trainer = Trainer::new(model, &kept, cfg)?;
    let mut curve = Vec::with_capacity(cfg.steps.div_ceil(cfg.log_every));
    let mut window = (0.0, 0usize);
    for step in 0..cfg.steps {
        let progress = step as f64 / cfg.steps as f64;
        trainer.adam.lr = cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        window.0 += trainer.step(step)?;
        window.1 += 1;
        if window.1 == cfg.log_every || step + 1 == cfg.steps {
            curve.push(window.0 / window.1 as f64);
            window = (0.0, 0);
        }
    }
    Ok(TrainOutcome {
        model: trainer.model,
        loss_curve: curve,
    })
}

/// Short pretraining run that records each sample's probe loss after every
/// epoch. Returns the trace and the final-epoch model.
pub fn pretrain_trace(
    model: VelocityModel,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LossTrace, VelocityModel)> {
    cfg.validate()?;
    if cfg.pretrain_epochs < 2 {
        return Err(Error::invalid(format!(
            "pretraining needs at least 2 epochs to measure loss changes, got {}",
            cfg.pretrain_epochs
        )));
    }
    let noise = probe_noise(ds.len(), ds.dim(), cfg.seed);
    let mut losses = Array2::zeros((ds.len(), cfg.pretrain_epochs));
    let mut trainer = Trainer::new(model, ds, cfg)?;
    let per_epoch = trainer.steps_per_epoch();
    let probe = Probe {
        noise: noise.view(),
        t: cfg.probe_timestep,
    };
    let mut step = 0;
    for epoch in 0..cfg.pretrain_epochs {
        // start every epoch on a fresh permutation
        trainer.cursor = trainer.order.len();
        for _ in 0..per_epoch {
            trainer.step(step)?;
            step += 1;
        }
        let col = flow::probe_losses(&trainer.model, ds, &probe)?;
        losses.column_mut(epoch).assign(&ndarray::Array1::from(col));
    }
    let trace = LossTrace {
        losses,
        noise,
        probe_timestep: cfg.probe_timestep,
    };
    Ok((trace, trainer.model))
}
