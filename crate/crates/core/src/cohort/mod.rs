//! Per-patient cohort assembly: structured EMR fields, extracted
//! phenotypes, the first treatment plan, regimen features and failure
//! labels.

pub mod assemble;
pub mod emr;
pub mod encode;
pub mod failure;
pub mod regimen;

use thiserror::Error;

pub use assemble::{
    build_cohort, load_dataset, merge_phenotypes, Cohort, CohortConfig, CohortSummary, ColumnInfo, Conflict,
    FeatureVector, PatientSurvival, RegimenFailure,
};
pub use emr::{read_approved_drugs, read_emr, read_plans, ApprovedDrug, EmrRow, PlanDrug, TreatmentPlan};
pub use encode::{ElixhauserTable, Gender, MISSING, NOT_ASSESSABLE};
pub use failure::{derive_failure, failure_causes, is_failure, time_to_event, FailureCause, FailureLabel};
pub use regimen::{build_regimen_features, Combination, PatientRegimen, RegimenCatalog};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("patient {patient_id}: event precedes plan start by {} days", -days)]
    NegativeDuration { patient_id: String, days: i64 },
    #[error("{source_name} line {line}: {reason}")]
    InvalidRow { source_name: String, line: u64, reason: String },
    #[error("{source_name}: {source}")]
    Csv { source_name: String, source: csv::Error },
    #[error("patient {patient_id}: unrecognised {field} value {value:?}")]
    InvalidValue { patient_id: String, field: String, value: String },
    #[error("patient ids do not line up across sources; orphans: {}", orphans.join(", "))]
    Alignment { orphans: Vec<String> },
    #[error("no patient appears in every source")]
    EmptyIntersection,
    #[error(transparent)]
    Survival(#[from] crate::survival::SurvivalError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}
