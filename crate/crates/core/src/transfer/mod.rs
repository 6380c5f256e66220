//! Packaging a trained source model with its encoders, applying it frozen
//! to a target log or a stream of ongoing cases, and the comparisons
//! against target-only models.

mod analysis;
mod bundle;
mod online;
mod pipeline;
mod target;

use serde::{Deserialize, Serialize};

pub use analysis::{embedding_distance_matrix, DistanceMatrix};
pub use bundle::{
    load_bundle, save_bundle, ActivityManifest, Manifest, ModelManifest, TransferBundle, CHECKSUMS_FILE,
    FORMAT_VERSION, MANIFEST_FILE, METRICS, VECTORS_FILE, WEIGHTS_FILE,
};
pub use online::{
    predict_online, OnlineOutput, OnlinePredictor, OnlineSummary, Prediction, RecordError, RecordErrorKind,
};
pub use pipeline::{
    binary_labels, encode_log, fit_time_encoder, prepare_log, run_source, score_dataset, target_time_encoder,
    train_lstm, ActivitySpec, PipelineConfig, PreparedLog, SourceRun, TimeFeature,
};
pub use target::{
    compare_from_scratch, evaluate_on_target, fraction_count, prepare_target, sample_keys, scale_study,
    transferred_features, Comparison, PreparedTarget, ScaleRow, ScaleStudy, SeedReport, TargetEval,
    TargetEvaluation, TargetOptions, DEFAULT_FRACTIONS,
};

/// Where the relative time scaler's statistic comes from on a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMode {
    /// Reuse the statistic fitted on the source training split.
    Source,
    /// Refit the same strategy on the target's own data.
    #[default]
    PerDomain,
}
