//! Harrell's concordance index in O(n log n).

use serde::{Deserialize, Serialize};

use super::data::SurvivalRecord;
use super::SurvivalError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub tied_risk: u64,
    pub comparable: u64,
}

impl ConcordanceCounts {
    pub fn index(&self) -> Option<f64> {
        (self.comparable > 0).then(|| (self.concordant as f64 + 0.5 * self.tied_risk as f64) / self.comparable as f64)
    }
}

struct Counter {
    tree: Vec<u64>,
}

impl Counter {
    fn new(n: usize) -> Self {
        Counter { tree: vec![0; n + 1] }
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// A pair (i, j) is comparable when t_i < t_j and i had the event; it is
/// concordant when risk_i > risk_j. Equal risks count one half.
pub fn concordance_counts(risks: &[f64], records: &[SurvivalRecord]) -> Result<ConcordanceCounts, SurvivalError> {
    if risks.len() != records.len() {
        return Err(SurvivalError::InvalidInput(format!("{} risks for {} records", risks.len(), records.len())));
    }
    if risks.iter().any(|r| r.is_nan()) {
        return Err(SurvivalError::InvalidInput("NaN risk".into()));
    }
    let n = risks.len();
    // dense ranks of risk values
    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for w in 0..n {
        if w > 0 && risks[by_risk[w]] != risks[by_risk[w - 1]] {
            r += 1;
        }
        rank[by_risk[w]] = r;
    }

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| records[b].time.total_cmp(&records[a].time));
    let mut seen = Counter::new(r + 1);
    let mut inserted = 0u64;
    let mut c = ConcordanceCounts::default();
    let mut i = 0;
    // walk times from latest to earliest; `seen` holds strictly later rows
    while i < n {
        let t = records[by_time[i]].time;
        let mut j = i;
        while j < n && records[by_time[j]].time == t {
            j += 1;
        }
        for &k in &by_time[i..j] {
            if records[k].event {
                let lower = seen.below(rank[k]);
                let lower_or_equal = seen.below(rank[k] + 1);
                c.concordant += lower;
                c.tied_risk += lower_or_equal - lower;
                c.comparable += inserted;
            }
        }
        for &k in &by_time[i..j] {
            seen.add(rank[k]);
            inserted += 1;
        }
        i = j;
    }
    Ok(c)
}

pub fn concordance_index(risks: &[f64], records: &[SurvivalRecord]) -> Result<f64, SurvivalError> {
    if risks.len() < 2 {
        return Err(SurvivalError::NoComparablePairs);
    }
    concordance_counts(risks, records)?.index().ok_or(SurvivalError::NoComparablePairs)
}
