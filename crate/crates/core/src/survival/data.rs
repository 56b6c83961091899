use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SurvivalError;

/// Follow-up time in days and whether it ended in the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool) -> Self {
        SurvivalRecord { time, event }
    }
}

pub fn records(times: &[f64], events: &[bool]) -> Vec<SurvivalRecord> {
    times.iter().zip(events).map(|(&t, &e)| SurvivalRecord::new(t, e)).collect()
}

/// sha256 over the newline-joined feature names.
pub fn schema_hash(names: &[String]) -> String {
    hex::encode(Sha256::digest(names.join("\n").as_bytes()))
}

/// Column-major numeric features with names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self, SurvivalError> {
        if names.len() != columns.len() {
            return Err(SurvivalError::InvalidInput(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let n = columns.first().map_or(0, Vec::len);
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(SurvivalError::InvalidInput(format!("column {name} has {} rows, expected {n}", col.len())));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(SurvivalError::InvalidInput(format!("column {name} row {i} is not finite")));
            }
        }
        Ok(FeatureMatrix { names, columns })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, SurvivalError> {
        let p = names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(SurvivalError::InvalidInput(format!("row {i} has {} values, expected {p}", r.len())));
            }
            for (c, v) in columns.iter_mut().zip(r) {
                c.push(*v);
            }
        }
        FeatureMatrix::new(names, columns)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_rows());
        self.columns[j] = values;
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    pub fn schema_hash(&self) -> String {
        schema_hash(&self.names)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalData {
    pub x: FeatureMatrix,
    pub y: Vec<SurvivalRecord>,
}

impl SurvivalData {
    pub fn new(x: FeatureMatrix, y: Vec<SurvivalRecord>) -> Result<Self, SurvivalError> {
        if x.n_rows() != y.len() {
            return Err(SurvivalError::InvalidInput(format!("{} feature rows for {} records", x.n_rows(), y.len())));
        }
        if let Some(i) = y.iter().position(|r| !r.time.is_finite() || r.time < 0.0) {
            return Err(SurvivalError::InvalidInput(format!("record {i} has invalid time {}", y[i].time)));
        }
        Ok(SurvivalData { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> SurvivalData {
        SurvivalData { x: self.x.select_rows(idx), y: idx.iter().map(|&i| self.y[i]).collect() }
    }

    /// Seeded split into (train, test) with `test_fraction` of rows held out.
    pub fn train_test_split(&self, test_fraction: f64, seed: u64) -> (SurvivalData, SurvivalData) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((self.len() as f64) * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test.min(self.len()));
        let (mut train, mut test) = (train.to_vec(), test.to_vec());
        train.sort_unstable();
        test.sort_unstable();
        (self.select(&train), self.select(&test))
    }
}
