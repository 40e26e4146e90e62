//! Experiment orchestration: configuration, the resumable sweep, curve
//! files and cluster-balance reports.

mod balance;
mod config;
mod curves;
mod data;
mod evaluate;
mod sweep;

pub use balance::{balance_report, tables_by_cell, BalanceRow, BalanceTable};
pub use config::{
    default_methods, default_metrics, DatasetKind, DatasetSpec, ExperimentConfig, Method,
    MethodSpec, Metric,
};
pub use curves::{completed_reports, emit_curves, load_curves, mean_curve, CurvePoint};
pub use data::{has_labels, load_universe, preset_mixture, split_reference, MOONS_NOISE};
pub use evaluate::{evaluate_samples, EvalContext};
pub use sweep::{
    cell_keys, recompute_cell, run_dir, run_experiment, run_root, CellKey, CellResult,
    SweepOutcome, RUN_ROOT_ENV,
};
