//! Proportional-hazards Weibull cohort with one binary hazard driver and
//! pure-noise covariates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::survival::{FeatureMatrix, SurvivalData, SurvivalRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeibullConfig {
    pub n: usize,
    /// Hazard multiplier for `group = 1`.
    pub hazard_ratio: f64,
    pub shape: f64,
    pub scale_days: f64,
    pub censoring_fraction: f64,
    pub group_probability: f64,
    pub n_noise: usize,
}

impl Default for WeibullConfig {
    fn default() -> Self {
        WeibullConfig {
            n: 2000,
            hazard_ratio: 5.0,
            shape: 1.5,
            scale_days: 365.0,
            censoring_fraction: 0.3,
            group_probability: 0.5,
            n_noise: 5,
        }
    }
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    // 1 - U lies in (0, 1]
    -(1.0 - rng.random::<f64>()).ln()
}

/// Column 0 is `group`; the rest are uniform noise. Event times follow
/// S(t | g) = exp(-(t/scale)^shape * hr^g). Censoring times are
/// exponential with the rate chosen so that exactly
/// round(n * censoring_fraction) rows are censored.
pub fn weibull_cohort(cfg: &WeibullConfig, seed: u64) -> SurvivalData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n;
    let beta = cfg.hazard_ratio.ln();
    let mut group = Vec::with_capacity(n);
    let mut noise = vec![Vec::with_capacity(n); cfg.n_noise];
    let mut event_t = Vec::with_capacity(n);
    let mut censor_draw = Vec::with_capacity(n);
    for _ in 0..n {
        let g = if rng.random::<f64>() < cfg.group_probability { 1.0 } else { 0.0 };
        group.push(g);
        for col in noise.iter_mut() {
            col.push(rng.random::<f64>());
        }
        event_t.push(cfg.scale_days * (exp1(&mut rng) / (beta * g).exp()).powf(1.0 / cfg.shape));
        censor_draw.push(exp1(&mut rng));
    }

    // row i is censored iff censor_draw/rate < event_t, i.e. ratio < rate
    let ratio: Vec<f64> = censor_draw.iter().zip(&event_t).map(|(c, t)| c / t).collect();
    let mut sorted = ratio.clone();
    sorted.sort_by(f64::total_cmp);
    let m = ((n as f64) * cfg.censoring_fraction).round() as usize;
    let rate = match m {
        0 => sorted.first().map_or(0.0, |v| v / 2.0),
        m if m >= n => sorted.last().map_or(1.0, |v| v * 2.0),
        m => (sorted[m - 1] + sorted[m]) / 2.0,
    };
    let y = event_t
        .iter()
        .zip(&censor_draw)
        .map(|(&t, &c)| {
            let ct = if rate > 0.0 { c / rate } else { f64::INFINITY };
            if ct < t {
                SurvivalRecord::new(ct, false)
            } else {
                SurvivalRecord::new(t, true)
            }
        })
        .collect();

    let mut names = vec!["group".to_string()];
    names.extend((1..=cfg.n_noise).map(|i| format!("noise_{i}")));
    let mut columns = vec![group];
    columns.extend(noise);
    SurvivalData::new(FeatureMatrix::new(names, columns).expect("generated columns align"), y).expect("generated times are valid")
}

/// Same features with outcomes randomly reassigned across rows.
pub fn permute_outcomes(data: &SurvivalData, seed: u64) -> SurvivalData {
    let mut y = data.y.clone();
    y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    SurvivalData { x: data.x.clone(), y }
}
