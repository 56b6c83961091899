//! Survival estimation, random survival forests and their evaluation.

pub mod classify;
pub mod concordance;
pub mod curves;
pub mod data;
pub mod forest;
pub mod importance;
pub mod io;
pub mod logrank;

use thiserror::Error;

pub use classify::{
    calibration_curve, classify_at, classify_survival, status_at, sweep_from_survival, sweep_time_points, CalibrationBin,
    TimePointMetrics, TimePointSweep, DEFAULT_THRESHOLD,
};
pub use concordance::{concordance_counts, concordance_index, ConcordanceCounts};
pub use curves::{kaplan_meier, nelson_aalen, CumulativeHazard, SurvivalFunction};
pub use data::{records, schema_hash, FeatureMatrix, SurvivalData, SurvivalRecord};
pub use forest::{fit_forest, fit_forest_with, predict_risk, predict_survival, ForestConfig, SurvivalForestModel, SurvivalTree};
pub use importance::{permutation_importance, FeatureImportance};
pub use io::{deserialize_model, serialize_model};
pub use logrank::logrank_statistic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvivalError {
    #[error("no records")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("split has an empty side, no events, or zero variance")]
    DegenerateSplit,
    #[error("need at least 2 distinct event times, found {distinct_event_times}")]
    InsufficientEvents { distinct_event_times: usize },
    #[error("feature schema {got} does not match model schema {expected}")]
    SchemaMismatch { expected: String, got: String },
    #[error("no comparable pairs for the concordance index")]
    NoComparablePairs,
    #[error("model file version {found}, this build reads version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("stored schema hash {stored} does not match feature names ({computed})")]
    SchemaHashMismatch { stored: String, computed: String },
    #[error("model serialization: {0}")]
    Serialization(String),
}
