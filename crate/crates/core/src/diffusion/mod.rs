//! Small flow-matching velocity model: training, probes and ODE sampling.

mod checkpoint;
mod flow;
mod model;
mod sampler;
mod train;

pub use checkpoint::{load_model, save_model};
pub use flow::{
    per_sample_grad, per_sample_loss, probe_grad_dots, probe_grad_norms, probe_losses,
    probe_mean_grad, Probe,
};
pub use model::{Architecture, VelocityModel};
pub use sampler::{initial_noise, integrate_heun, sample_ode, VelocityField};
pub use train::{pretrain_trace, probe_noise, train, LossTrace, TrainConfig, TrainOutcome};

/// Hidden layout used when nothing else is configured: 3 x 128 tanh units.
pub fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128]
}
