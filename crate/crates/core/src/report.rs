//! Held-out evaluation of a fitted forest and the report it produces.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::plot::Series;
use crate::survival::{
    calibration_curve, concordance_index, permutation_importance, status_at, sweep_from_survival, CalibrationBin,
    FeatureImportance, ForestConfig, SurvivalData, SurvivalError, SurvivalForestModel, SurvivalRecord, TimePointMetrics,
    DEFAULT_THRESHOLD,
};

pub const REPORT_FORMAT: &str = "oncosurv-eval";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalSettings {
    pub forest: ForestConfig,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub threshold: f64,
    /// Candidate time points in days; empty means the 5th..95th
    /// percentiles (step 5) of training event times.
    pub time_grid: Vec<f64>,
    pub importance_repeats: usize,
}

impl Default for SurvivalSettings {
    fn default() -> Self {
        SurvivalSettings {
            forest: ForestConfig::default(),
            test_fraction: 0.2,
            split_seed: 42,
            threshold: DEFAULT_THRESHOLD,
            time_grid: Vec::new(),
            importance_repeats: 5,
        }
    }
}

impl SurvivalSettings {
    pub fn validate(&self) -> Result<(), SurvivalError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(SurvivalError::InvalidInput(format!("test_fraction must be in (0, 1), got {}", self.test_fraction)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(SurvivalError::InvalidInput(format!("threshold must be in [0, 1], got {}", self.threshold)));
        }
        if self.importance_repeats == 0 {
            return Err(SurvivalError::InvalidInput("importance_repeats must be >= 1".into()));
        }
        if self.forest.n_trees == 0 || self.forest.min_leaf_size == 0 {
            return Err(SurvivalError::InvalidInput("n_trees and min_leaf_size must be >= 1".into()));
        }
        if let Some(t) = self.time_grid.iter().find(|t| !(**t > 0.0)) {
            return Err(SurvivalError::InvalidInput(format!("time grid point {t} must be > 0")));
        }
        Ok(())
    }
}

/// Nearest-rank percentiles 5, 10, .., 95 of the event times, deduplicated.
pub fn default_time_grid(y: &[SurvivalRecord]) -> Result<Vec<f64>, SurvivalError> {
    let mut ev: Vec<f64> = y.iter().filter(|r| r.event).map(|r| r.time).collect();
    if ev.is_empty() {
        return Err(SurvivalError::InsufficientEvents { distinct_event_times: 0 });
    }
    ev.sort_by(f64::total_cmp);
    let n = ev.len();
    let mut grid: Vec<f64> = (1..=19)
        .map(|k| {
            let rank = (5 * k * n).div_ceil(100);
            ev[rank.clamp(1, n) - 1]
        })
        .collect();
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub split_seed: u64,
    pub test_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_events: usize,
    pub test_events: usize,
    pub forest: ForestConfig,
    pub n_features: usize,
    pub schema_hash: String,
    pub time_grid: Vec<f64>,
    pub grid_source: String,
    pub importance_repeats: usize,
    /// The sweep and every metric below are computed on the held-out split.
    pub evaluated_on: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub t: f64,
    pub n_evaluated: usize,
    pub bins: Vec<CalibrationBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub c_index: f64,
    pub threshold: f64,
    pub t_star: f64,
    pub at_t_star: TimePointMetrics,
    pub sweep: Vec<TimePointMetrics>,
    pub calibration: CalibrationReport,
    pub importances: Vec<FeatureImportance>,
    pub protocol: Protocol,
}

/// Figures that accompany a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Figures {
    /// Mean predicted survival of held-out patients grouped by observed
    /// outcome.
    pub survival_curves: Vec<Series>,
    pub calibration: Vec<CalibrationBin>,
}

fn mean_curve(label: &str, model: &SurvivalForestModel, rows: &[&crate::survival::SurvivalFunction]) -> Option<Series> {
    if rows.is_empty() {
        return None;
    }
    let points = model
        .time_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, rows.iter().map(|s| s.probabilities()[k]).sum::<f64>() / rows.len() as f64))
        .collect();
    Some(Series { label: format!("{label} (n={})", rows.len()), points })
}

/// Scores `model` on `test`. `train` only supplies the default time grid
/// and protocol counts.
pub fn evaluate_model(
    model: &SurvivalForestModel,
    train: &SurvivalData,
    test: &SurvivalData,
    settings: &SurvivalSettings,
    exec: Execution,
) -> Result<(EvalReport, Figures), SurvivalError> {
    settings.validate()?;
    let (grid, grid_source) = if settings.time_grid.is_empty() {
        (default_time_grid(&train.y)?, "training event-time percentiles 5..95".to_string())
    } else {
        (settings.time_grid.clone(), "configured".to_string())
    };
    let risk = model.predict_risk(&test.x, exec)?;
    let c_index = concordance_index(&risk, &test.y)?;
    let survival = model.predict_survival(&test.x, exec)?;
    let sweep = sweep_from_survival(&survival, &test.y, &grid, settings.threshold)?;
    let t_star = sweep.t_star;
    let at_t_star = sweep.table.iter().find(|m| m.t == t_star).cloned().expect("t_star is a grid point");

    let (mut predicted, mut observed) = (Vec::new(), Vec::new());
    for (s, r) in survival.iter().zip(&test.y) {
        if let Some(failed) = status_at(r, t_star) {
            predicted.push((1.0 - s.at(t_star)).clamp(0.0, 1.0));
            observed.push(failed);
        }
    }
    let bins = calibration_curve(&predicted, &observed)?;
    let importances =
        permutation_importance(model, &test.x, &test.y, settings.importance_repeats, settings.forest.seed, exec)?;

    let failed: Vec<_> = survival.iter().zip(&test.y).filter(|(_, r)| r.event).map(|(s, _)| s).collect();
    let censored: Vec<_> = survival.iter().zip(&test.y).filter(|(_, r)| !r.event).map(|(s, _)| s).collect();
    let curves = [mean_curve("failed", model, &failed), mean_curve("censored", model, &censored)]
        .into_iter()
        .flatten()
        .collect();

    let protocol = Protocol {
        split_seed: settings.split_seed,
        test_fraction: settings.test_fraction,
        n_train: train.len(),
        n_test: test.len(),
        train_events: train.y.iter().filter(|r| r.event).count(),
        test_events: test.y.iter().filter(|r| r.event).count(),
        forest: model.config.clone(),
        n_features: model.feature_names.len(),
        schema_hash: model.schema_hash.clone(),
        time_grid: grid,
        grid_source,
        importance_repeats: settings.importance_repeats,
        evaluated_on: "test split".into(),
    };
    let report = EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        c_index,
        threshold: settings.threshold,
        t_star,
        at_t_star,
        sweep: sweep.table,
        calibration: CalibrationReport { t: t_star, n_evaluated: predicted.len(), bins: bins.clone() },
        importances,
        protocol,
    };
    Ok((report, Figures { survival_curves: curves, calibration: bins }))
}
