//! Failure classification at a time point, time-point selection and
//! calibration bins.
//!
//! Rows censored before t have no known status at t and are left out of
//! every metric computed at t.

use serde::{Deserialize, Serialize};

use crate::eval::{metrics_from_confusion, per_class_from_confusion, ConfusionCounts};
use crate::exec::Execution;

use super::curves::SurvivalFunction;
use super::data::{FeatureMatrix, SurvivalRecord};
use super::forest::SurvivalForestModel;
use super::SurvivalError;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const CALIBRATION_BINS: usize = 10;

/// Failure is predicted when S(t*) is strictly below `threshold`.
pub fn classify_survival(survival_at_t: &[f64], threshold: f64) -> Vec<bool> {
    survival_at_t.iter().map(|&s| s < threshold).collect()
}

pub fn classify_at(
    model: &SurvivalForestModel,
    x: &FeatureMatrix,
    t_star: f64,
    threshold: f64,
) -> Result<Vec<bool>, SurvivalError> {
    if !(t_star > 0.0) {
        return Err(SurvivalError::InvalidInput(format!("t_star must be > 0, got {t_star}")));
    }
    Ok(classify_survival(&model.survival_at(x, t_star, Execution::default())?, threshold))
}

/// Event-by-t status: `Some(true)` failed at or before t, `Some(false)`
/// followed past t (or censored exactly at t) without failing, `None`
/// censored before t.
pub fn status_at(record: &SurvivalRecord, t: f64) -> Option<bool> {
    if record.event && record.time <= t {
        Some(true)
    } else if record.time >= t {
        Some(false)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePointMetrics {
    pub t: f64,
    pub n_evaluated: usize,
    pub n_excluded: usize,
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1_pos: Option<f64>,
    pub f1_neg: Option<f64>,
    pub macro_f1: Option<f64>,
    /// mean(accuracy, f1_pos, f1_neg), undefined terms counted as 0.
    pub composite: f64,
    /// Both outcomes occur among the evaluated rows.
    pub both_classes: bool,
}

pub fn metrics_at(survival: &[SurvivalFunction], y: &[SurvivalRecord], t: f64, threshold: f64) -> TimePointMetrics {
    let mut counts = ConfusionCounts::default();
    let mut excluded = 0;
    for (s, r) in survival.iter().zip(y) {
        match status_at(r, t) {
            Some(actual) => counts.record(s.at(t) < threshold, actual),
            None => excluded += 1,
        }
    }
    let m = metrics_from_confusion(&counts).ok();
    let pc = per_class_from_confusion(&counts).ok();
    let accuracy = m.as_ref().and_then(|m| m.accuracy);
    let f1_pos = pc.as_ref().and_then(|p| p.f1_pos);
    let f1_neg = pc.as_ref().and_then(|p| p.f1_neg);
    TimePointMetrics {
        t,
        n_evaluated: counts.population() as usize,
        n_excluded: excluded,
        counts,
        accuracy,
        precision: m.as_ref().and_then(|m| m.precision),
        recall: m.as_ref().and_then(|m| m.recall),
        f1_pos,
        f1_neg,
        macro_f1: pc.as_ref().and_then(|p| p.macro_f1),
        composite: (accuracy.unwrap_or(0.0) + f1_pos.unwrap_or(0.0) + f1_neg.unwrap_or(0.0)) / 3.0,
        both_classes: counts.tp + counts.fn_ > 0 && counts.tn + counts.fp > 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePointSweep {
    pub t_star: f64,
    pub table: Vec<TimePointMetrics>,
}

/// Scores every grid point and picks the best composite; ties go to the
/// earlier time. Points where only one outcome has been observed are
/// skipped unless no point has both.
pub fn sweep_from_survival(
    survival: &[SurvivalFunction],
    y: &[SurvivalRecord],
    grid: &[f64],
    threshold: f64,
) -> Result<TimePointSweep, SurvivalError> {
    if survival.len() != y.len() {
        return Err(SurvivalError::InvalidInput(format!("{} predictions for {} records", survival.len(), y.len())));
    }
    let mut ts: Vec<f64> = grid.iter().copied().filter(|t| t.is_finite()).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.is_empty() {
        return Err(SurvivalError::InvalidInput("empty time grid".into()));
    }
    let table: Vec<TimePointMetrics> = ts.iter().map(|&t| metrics_at(survival, y, t, threshold)).collect();
    let any_both = table.iter().any(|m| m.both_classes);
    let mut best: Option<usize> = None;
    for (i, row) in table.iter().enumerate() {
        if any_both && !row.both_classes {
            continue;
        }
        if best.is_none_or(|b| row.composite > table[b].composite) {
            best = Some(i);
        }
    }
    let best = best.expect("grid is non-empty");
    Ok(TimePointSweep { t_star: table[best].t, table })
}

pub fn sweep_time_points(
    model: &SurvivalForestModel,
    x: &FeatureMatrix,
    y: &[SurvivalRecord],
    grid: &[f64],
    threshold: f64,
) -> Result<TimePointSweep, SurvivalError> {
    let survival = model.predict_survival(x, Execution::default())?;
    sweep_from_survival(&survival, y, grid, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predicted: Option<f64>,
    pub observed_fraction: Option<f64>,
}

/// Ten equal-width bins over [0, 1]; the last bin includes 1.
pub fn calibration_curve(predicted: &[f64], observed: &[bool]) -> Result<Vec<CalibrationBin>, SurvivalError> {
    if predicted.len() != observed.len() {
        return Err(SurvivalError::InvalidInput(format!("{} predictions for {} outcomes", predicted.len(), observed.len())));
    }
    if let Some(p) = predicted.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(SurvivalError::InvalidInput(format!("probability {p} outside [0, 1]")));
    }
    let mut sum = [0.0; CALIBRATION_BINS];
    let mut pos = [0usize; CALIBRATION_BINS];
    let mut count = [0usize; CALIBRATION_BINS];
    for (&p, &o) in predicted.iter().zip(observed) {
        let b = ((p * CALIBRATION_BINS as f64) as usize).min(CALIBRATION_BINS - 1);
        sum[b] += p;
        pos[b] += o as usize;
        count[b] += 1;
    }
    Ok((0..CALIBRATION_BINS)
        .map(|b| {
            let n = count[b];
            CalibrationBin {
                lower: b as f64 / CALIBRATION_BINS as f64,
                upper: (b + 1) as f64 / CALIBRATION_BINS as f64,
                count: n,
                mean_predicted: (n > 0).then(|| sum[b] / n as f64),
                observed_fraction: (n > 0).then(|| pos[b] as f64 / n as f64),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::data::records;
    use rand::{Rng, SeedableRng};

    fn flat(s: f64) -> SurvivalFunction {
        SurvivalFunction::new(vec![1.0], vec![s]).unwrap()
    }

    #[test]
    fn strict_threshold() {
        assert_eq!(classify_survival(&[0.49, 0.5, 0.51], 0.5), vec![true, false, false]);
    }

    #[test]
    fn failure_set_grows_with_threshold() {
        let s: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let mut prev = 0;
        for k in 0..=20 {
            let n = classify_survival(&s, k as f64 / 20.0).iter().filter(|&&b| b).count();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn status_rules() {
        assert_eq!(status_at(&SurvivalRecord::new(5.0, true), 5.0), Some(true));
        assert_eq!(status_at(&SurvivalRecord::new(5.0, true), 4.0), Some(false));
        assert_eq!(status_at(&SurvivalRecord::new(5.0, false), 5.0), Some(false));
        assert_eq!(status_at(&SurvivalRecord::new(3.0, false), 5.0), None);
    }

    #[test]
    fn censored_before_t_excluded() {
        let y = records(&[2.0, 10.0, 3.0], &[true, false, false]);
        let s = vec![flat(0.2), flat(0.9), flat(0.1)];
        let m = metrics_at(&s, &y, 5.0, 0.5);
        assert_eq!((m.n_evaluated, m.n_excluded), (2, 1));
        assert_eq!(m.accuracy, Some(1.0));
    }

    #[test]
    fn single_point_grid() {
        let y = records(&[2.0, 10.0], &[true, false]);
        let sw = sweep_from_survival(&[flat(0.2), flat(0.9)], &y, &[7.0], 0.5).unwrap();
        assert_eq!(sw.t_star, 7.0);
        assert_eq!(sw.table.len(), 1);
    }

    #[test]
    fn ties_prefer_earlier_time() {
        // constant predictions and no events inside the grid: every point scores the same
        let y = records(&[100.0, 100.0], &[true, false]);
        let sw = sweep_from_survival(&[flat(0.9), flat(0.9)], &y, &[30.0, 10.0, 20.0], 0.5).unwrap();
        assert_eq!(sw.t_star, 10.0);
    }

    #[test]
    fn one_class_points_skipped() {
        // at t=1 nobody has failed yet: accuracy and f1_neg are 1, composite 2/3
        let y = records(&[5.0, 5.0, 50.0, 50.0], &[true, true, false, false]);
        let s = vec![flat(0.6); 4];
        let sw = sweep_from_survival(&s, &y, &[1.0, 10.0], 0.5).unwrap();
        assert!(sw.table[0].composite > sw.table[1].composite);
        assert!(!sw.table[0].both_classes);
        assert_eq!(sw.t_star, 10.0);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(sweep_from_survival(&[], &[], &[], 0.5).is_err());
    }

    #[test]
    fn calibration_basics() {
        let bins = calibration_curve(&[0.05; 4], &[false; 4]).unwrap();
        assert_eq!(bins.len(), 10);
        assert_eq!(bins[0].observed_fraction, Some(0.0));
        assert_eq!(bins[0].count, 4);
        assert!(bins[1..].iter().all(|b| b.count == 0 && b.mean_predicted.is_none()));
        let bins = calibration_curve(&[1.0, 0.0, 0.95], &[true, false, true]).unwrap();
        assert_eq!(bins[9].count, 2);
        assert!(calibration_curve(&[1.2], &[true]).is_err());
    }

    #[test]
    fn bernoulli_consistent_predictions_calibrate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let o: Vec<bool> = p.iter().map(|&q| rng.random::<f64>() < q).collect();
        let bins = calibration_curve(&p, &o).unwrap();
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 10_000);
        for b in bins.iter().filter(|b| b.count > 0) {
            assert!((b.mean_predicted.unwrap() - b.observed_fraction.unwrap()).abs() <= 0.05);
        }
    }
}
