//! Importance scorers, k-means clustering and subset selection.

mod kmeans;
mod scores;
mod select;
mod table;

pub use kmeans::{
    cluster_histogram, kmeans_fit, kmeans_fit_with, load_clusters, save_clusters, ClusterModel,
    KMeansConfig,
};
pub use scores::{
    score_cluster_distance, score_el2n, score_grand, score_monotonicity, score_moso, score_random,
};
pub use select::{
    kept_count, proportional_quotas, select_balanced_clusters, select_by_score,
    select_proportional_clusters, ClusterPolicy, Direction, SelectionSpec,
};
pub use table::{load_scores, save_scores, ScoreTable};
