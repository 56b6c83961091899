//! Two-sample log-rank statistic, computed directly and by an incremental
//! sweep over sorted cut points.
//!
//! The sweep moves samples into the left group one at a time. With
//! `Y_Lk` the left count at risk at event time k, the observed-minus-
//! expected term and the variance are
//!
//!   O - E = sum_{j in L} event_j - sum_k Y_Lk * d_k / Y_k
//!   V     = sum_k c_k * (Y_Lk / Y_k - Y_Lk^2 / Y_k^2),  c_k = d_k (Y_k - d_k) / (Y_k - 1)
//!
//! Every linear term is a prefix sum over the sample's at-risk range. The
//! quadratic term needs sum_{k<m} w_k * Y_Lk for the current left set,
//! kept in two Fenwick trees indexed by at-risk range length.

use super::curves::risk_table;
use super::data::SurvivalRecord;
use super::SurvivalError;

/// Variances at or below this are treated as zero.
const VARIANCE_EPS: f64 = 1e-12;

pub fn logrank_statistic(left: &[SurvivalRecord], right: &[SurvivalRecord]) -> Result<f64, SurvivalError> {
    if left.is_empty() || right.is_empty() {
        return Err(SurvivalError::DegenerateSplit);
    }
    let pooled: Vec<SurvivalRecord> = left.iter().chain(right).copied().collect();
    let rows = risk_table(&pooled);
    if rows.is_empty() {
        return Err(SurvivalError::DegenerateSplit);
    }
    let mut o_minus_e = 0.0;
    let mut var = 0.0;
    for r in &rows {
        let y = r.at_risk as f64;
        let d = r.events as f64;
        let y_l = left.iter().filter(|s| s.time >= r.time).count() as f64;
        let d_l = left.iter().filter(|s| s.time == r.time && s.event).count() as f64;
        o_minus_e += d_l - y_l * d / y;
        if r.at_risk > 1 {
            var += (y_l / y) * (1.0 - y_l / y) * d * (y - d) / (y - 1.0);
        }
    }
    if var <= VARIANCE_EPS {
        return Err(SurvivalError::DegenerateSplit);
    }
    Ok(o_minus_e * o_minus_e / var)
}

struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, i: usize) -> f64 {
        let mut i = i.min(self.tree.len() - 1);
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Event-time summary of one node's samples, shared by all features
/// scanned at that node.
pub(crate) struct NodeEvents {
    /// Per sample (in node order): number of node event times <= its time.
    at_risk_len: Vec<usize>,
    event: Vec<bool>,
    prefix_a: Vec<f64>,
    prefix_u: Vec<f64>,
    prefix_w: Vec<f64>,
    n_times: usize,
}

impl NodeEvents {
    /// `None` when the node has no events.
    pub(crate) fn new(samples: &[SurvivalRecord]) -> Option<Self> {
        let rows = risk_table(samples);
        if rows.is_empty() {
            return None;
        }
        let k = rows.len();
        let (mut pa, mut pu, mut pw) = (vec![0.0; k + 1], vec![0.0; k + 1], vec![0.0; k + 1]);
        for (i, r) in rows.iter().enumerate() {
            let y = r.at_risk as f64;
            let d = r.events as f64;
            let c = if r.at_risk > 1 { d * (y - d) / (y - 1.0) } else { 0.0 };
            pa[i + 1] = pa[i] + d / y;
            pu[i + 1] = pu[i] + c / y;
            pw[i + 1] = pw[i] + c / (y * y);
        }
        let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
        Some(NodeEvents {
            at_risk_len: samples.iter().map(|s| times.partition_point(|&t| t <= s.time)).collect(),
            event: samples.iter().map(|s| s.event).collect(),
            prefix_a: pa,
            prefix_u: pu,
            prefix_w: pw,
            n_times: k,
        })
    }

    /// Scans cuts between consecutive distinct values of `values` (one per
    /// node sample) and calls `visit(cut, n_left, statistic)` for every cut
    /// leaving at least `min_side` samples on each side with positive variance.
    pub(crate) fn sweep(&self, values: &[f64], min_side: usize, mut visit: impl FnMut(f64, usize, f64)) {
        let n = values.len();
        if n < 2 * min_side.max(1) {
            return;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

        let mut count = Fenwick::new(self.n_times + 1);
        let mut wsum = Fenwick::new(self.n_times + 1);
        let mut in_left = 0.0;
        let (mut observed, mut expected, mut lin_var, mut quad_var) = (0.0, 0.0, 0.0, 0.0);
        let mut i = 0;
        while i < n {
            let v = values[order[i]];
            while i < n && values[order[i]] == v {
                let j = order[i];
                let m = self.at_risk_len[j];
                // sum_{k<m} w_k * Y_Lk before adding j
                let below = wsum.prefix(m);
                let at_or_above = in_left - count.prefix(m);
                let s = below + self.prefix_w[m] * at_or_above;
                quad_var += 2.0 * s + self.prefix_w[m];
                lin_var += self.prefix_u[m];
                expected += self.prefix_a[m];
                observed += self.event[j] as u8 as f64;
                count.add(m, 1.0);
                wsum.add(m, self.prefix_w[m]);
                in_left += 1.0;
                i += 1;
            }
            if i == n {
                break;
            }
            let n_left = i;
            if n_left < min_side || n - n_left < min_side {
                continue;
            }
            let var = lin_var - quad_var;
            if var > VARIANCE_EPS {
                let diff = observed - expected;
                let next = values[order[i]];
                let mid = (v + next) / 2.0;
                // adjacent floats: the midpoint may round up onto `next`
                let cut = if mid < next { mid } else { v };
                visit(cut, n_left, diff * diff / var);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::data::records;
    use proptest::prelude::*;

    #[test]
    fn identical_groups_score_zero() {
        let g = records(&[1.0, 3.0, 5.0], &[true, false, true]);
        assert!(logrank_statistic(&g, &g).unwrap().abs() < 1e-15);
    }

    #[test]
    fn separated_six_patient_table() {
        let left = records(&[1.0, 2.0, 3.0], &[true, true, true]);
        let right = records(&[4.0, 5.0, 6.0], &[true, true, true]);
        // expected/observed table for the left group, one row per event time:
        //   t  Y  Y_L  d  d_L   E_L = Y_L*d/Y   V = (Y_L/Y)(1-Y_L/Y) d (Y-d)/(Y-1)
        //   1  6  3    1  1     1/2             1/4
        //   2  5  2    1  1     2/5             6/25
        //   3  4  1    1  1     1/4             3/16
        //   4..6: Y_L = 0, contributes nothing
        let o_minus_e: f64 = 3.0 - (0.5 + 0.4 + 0.25);
        let v: f64 = 0.25 + 6.0 / 25.0 + 3.0 / 16.0;
        let expected = o_minus_e.powi(2) / v;
        let got = logrank_statistic(&left, &right).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((logrank_statistic(&right, &left).unwrap() - got).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let g = records(&[1.0, 2.0], &[false, false]);
        assert_eq!(logrank_statistic(&g, &g), Err(SurvivalError::DegenerateSplit));
        assert_eq!(logrank_statistic(&[], &g), Err(SurvivalError::DegenerateSplit));
    }

    fn sweep_all(samples: &[SurvivalRecord], values: &[f64], min_side: usize) -> Vec<(f64, usize, f64)> {
        let mut out = Vec::new();
        if let Some(ev) = NodeEvents::new(samples) {
            ev.sweep(values, min_side, |c, n, s| out.push((c, n, s)));
        }
        out
    }

    proptest! {
        #[test]
        fn sweep_matches_direct_statistic(
            data in prop::collection::vec((1u32..20, any::<bool>(), 0u32..8), 2..60),
            min_side in 1usize..5,
        ) {
            let samples: Vec<_> = data.iter().map(|&(t, e, _)| SurvivalRecord::new(t as f64, e)).collect();
            let values: Vec<f64> = data.iter().map(|&(_, _, x)| x as f64).collect();
            let swept = sweep_all(&samples, &values, min_side);
            let mut expected = Vec::new();
            let mut distinct: Vec<f64> = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            for w in distinct.windows(2) {
                let cut = (w[0] + w[1]) / 2.0;
                let left: Vec<_> = samples.iter().zip(&values).filter(|(_, &v)| v <= cut).map(|(s, _)| *s).collect();
                let right: Vec<_> = samples.iter().zip(&values).filter(|(_, &v)| v > cut).map(|(s, _)| *s).collect();
                if left.len() < min_side || right.len() < min_side {
                    continue;
                }
                if let Ok(stat) = logrank_statistic(&left, &right) {
                    expected.push((cut, left.len(), stat));
                }
            }
            prop_assert_eq!(swept.len(), expected.len());
            for (a, b) in swept.iter().zip(&expected) {
                prop_assert_eq!(a.0, b.0);
                prop_assert_eq!(a.1, b.1);
                prop_assert!((a.2 - b.2).abs() <= 1e-8 * (1.0 + b.2), "{} vs {}", a.2, b.2);
            }
        }
    }
}
