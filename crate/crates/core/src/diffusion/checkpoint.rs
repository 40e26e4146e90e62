//! Model checkpoints as JSON.
//!
//! Layout (keys sorted):
//! `{"dim", "format": "diffprune-mlp-v1", "hidden_sizes", "label_count",
//! "params": [...], "seed"}`. `params` follows the flat parameter layout of
//! [`super::Architecture`]; numbers round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, VelocityModel};
use crate::error::{Error, Result};
use crate::persist;

const FORMAT: &str = "diffprune-mlp-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    dim: usize,
    hidden_sizes: Vec<usize>,
    label_count: usize,
    seed: u64,
    params: Vec<f64>,
}

pub fn save_model(model: &VelocityModel, path: impl AsRef<Path>) -> Result<()> {
    let arch = model.architecture();
    let ck = Checkpoint {
        format: FORMAT.into(),
        dim: arch.dim,
        hidden_sizes: arch.hidden.clone(),
        label_count: arch.label_count,
        seed: model.seed(),
        params: model.params().to_vec(),
    };
    persist::write_json(path.as_ref(), &ck)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<VelocityModel> {
    let ck: Checkpoint = persist::read_json(path.as_ref())?;
    if ck.format != FORMAT {
        return Err(Error::invalid(format!(
            "unknown checkpoint format {:?}",
            ck.format
        )));
    }
    let arch = Architecture::new(ck.dim, ck.hidden_sizes, ck.label_count)?;
    VelocityModel::from_params(arch, ck.params, ck.seed)
}
