//! Product-limit and cumulative-hazard estimators.

use serde::{Deserialize, Serialize};

use super::data::SurvivalRecord;
use super::SurvivalError;

/// Right-continuous step function: `probabilities[i]` holds on
/// `[times[i], times[i+1])`, and S = 1 before the first time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalFunction {
    times: Vec<f64>,
    probabilities: Vec<f64>,
}

impl SurvivalFunction {
    pub fn new(times: Vec<f64>, probabilities: Vec<f64>) -> Result<Self, SurvivalError> {
        if times.len() != probabilities.len() {
            return Err(SurvivalError::InvalidInput("times and probabilities differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SurvivalError::InvalidInput("times must be strictly increasing".into()));
        }
        let mut prev = 1.0;
        for &p in &probabilities {
            if !(0.0..=1.0).contains(&p) || p > prev {
                return Err(SurvivalError::InvalidInput(format!("probability {p} breaks monotonicity or [0,1]")));
            }
            prev = p;
        }
        Ok(SurvivalFunction { times, probabilities })
    }

    pub(crate) fn from_parts_unchecked(times: Vec<f64>, probabilities: Vec<f64>) -> Self {
        SurvivalFunction { times, probabilities }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.probabilities[k - 1]
        }
    }
}

/// Non-decreasing step function H(t), 0 before the first time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeHazard {
    times: Vec<f64>,
    hazard: Vec<f64>,
}

impl CumulativeHazard {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn hazard(&self) -> &[f64] {
        &self.hazard
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            0.0
        } else {
            self.hazard[k - 1]
        }
    }

    pub fn to_survival(&self) -> SurvivalFunction {
        SurvivalFunction::from_parts_unchecked(self.times.clone(), self.hazard.iter().map(|h| (-h).exp()).collect())
    }
}

/// One row per distinct event time: (time, events, number at risk).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRow {
    pub time: f64,
    pub events: usize,
    pub at_risk: usize,
}

/// Event table over distinct event times. Records tied with an event
/// time are at risk at that time.
pub fn risk_table(records: &[SurvivalRecord]) -> Vec<RiskRow> {
    let mut sorted: Vec<SurvivalRecord> = records.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let n = sorted.len();
    let mut rows = Vec::new();
    let mut i = 0;
    while i < n {
        let t = sorted[i].time;
        let mut j = i;
        let mut d = 0;
        while j < n && sorted[j].time == t {
            d += sorted[j].event as usize;
            j += 1;
        }
        if d > 0 {
            rows.push(RiskRow { time: t, events: d, at_risk: n - i });
        }
        i = j;
    }
    rows
}

fn check(records: &[SurvivalRecord]) -> Result<(), SurvivalError> {
    if records.is_empty() {
        return Err(SurvivalError::EmptyInput);
    }
    if let Some(r) = records.iter().find(|r| !r.time.is_finite()) {
        return Err(SurvivalError::InvalidInput(format!("non-finite time {}", r.time)));
    }
    Ok(())
}

pub fn kaplan_meier(records: &[SurvivalRecord]) -> Result<SurvivalFunction, SurvivalError> {
    check(records)?;
    let rows = risk_table(records);
    let mut s = 1.0;
    let mut probs = Vec::with_capacity(rows.len());
    for r in &rows {
        s *= 1.0 - r.events as f64 / r.at_risk as f64;
        probs.push(s);
    }
    Ok(SurvivalFunction::from_parts_unchecked(rows.iter().map(|r| r.time).collect(), probs))
}

pub fn nelson_aalen(records: &[SurvivalRecord]) -> Result<CumulativeHazard, SurvivalError> {
    check(records)?;
    let rows = risk_table(records);
    let mut h = 0.0;
    let mut hazard = Vec::with_capacity(rows.len());
    for r in &rows {
        h += r.events as f64 / r.at_risk as f64;
        hazard.push(h);
    }
    Ok(CumulativeHazard { times: rows.iter().map(|r| r.time).collect(), hazard })
}
