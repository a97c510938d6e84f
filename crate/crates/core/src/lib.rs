//! Fair top-k ranking engine.
//!
//! Ranks candidates with a trained scoring model, measures bias in the data,
//! the mapping from features to ranks, and the top-k outcome, traces bias to
//! individual features, and mitigates it by feature exclusion, counterfactually
//! fair training, or randomized fair re-ranking.

pub mod audit;
pub mod data;
pub mod error;
pub mod measures;
pub mod model;
pub mod pipeline;
pub mod ranking;
pub mod rerank;
pub mod rng;
pub mod scenario;
mod serde_util;
pub mod session;
pub mod space;

/// Largest candidate pool accepted at run creation.
pub const MAX_ROWS: usize = 1000;
/// Largest pool whose distortion matrix is kept in run records.
pub const MAX_MATRIX_ROWS: usize = 500;

pub use audit::{
    feature_correlation, feature_distortion_score, instance_distortions, outliers, perturb_feature,
    perturbation_report, wasserstein_1d, Distribution1D, FeatureAuditReport,
};
pub use data::{
    load_dataset, partition_groups, select_features, Dataset, DatasetSchema, FeatureKind,
    FeatureSchema, FeatureView, Groups,
};
pub use error::{Error, Phase, Result};
pub use measures::{
    gfdcg, group_separation, group_skew, precision_at_k, rnn, rnn_gain, rnn_group, rnn_mean,
    statistical_parity, utility_at_k, within_ranking_curves, Curves, MeasureReport,
};
pub use model::{acf_transform, encode, train, Design, ModelKind, ScoringModel, TrainConfig};
pub use ranking::Ranking;
pub use rerank::{fair_rerank, RerankConfig};
pub use session::{ComparisonRow, InstanceDetail, RunConfig, RunRecord, Session};
pub use space::{
    build_space_pair, embed_2d, gower_distance, nearest_neighbors, DistanceMatrix, Embedding2D,
    SpacePair,
};
