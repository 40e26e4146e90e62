//! Evaluation metrics for generated samples.

mod gaussian;
mod inception;
mod linalg;
mod memorization;
mod prd;
mod rank;
mod report;
mod vendi;

pub use gaussian::{fit_gaussian, frechet_distance, GaussianSummary};
pub use inception::inception_score;
pub use memorization::memorization_distance;
pub use prd::{f_score, knn_precision_recall};
pub use rank::{average_ranks, spearman};
pub use report::{load_report, save_report, MetricsReport};
pub use vendi::{vendi_score, vendi_score_gram};

/// Default neighbourhood size for k-NN precision/recall.
pub const DEFAULT_K_NN: usize = 3;
