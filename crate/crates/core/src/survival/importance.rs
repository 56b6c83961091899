//! Permutation importance: mean drop in held-out C-index when one column
//! is shuffled.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::exec::{map_range, Execution};

use super::concordance::concordance_index;
use super::data::{FeatureMatrix, SurvivalRecord};
use super::forest::{tree_rng, SurvivalForestModel};
use super::SurvivalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub importance: f64,
    pub std_dev: f64,
}

/// Features in descending importance (ties by column order). Each
/// feature gets its own seeded stream, so results do not depend on
/// execution mode.
pub fn permutation_importance(
    model: &SurvivalForestModel,
    x: &FeatureMatrix,
    y: &[SurvivalRecord],
    repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<FeatureImportance>, SurvivalError> {
    if repeats == 0 {
        return Err(SurvivalError::InvalidInput("repeats must be >= 1".into()));
    }
    model.check_schema(x)?;
    let base = concordance_index(&model.predict_risk(x, Execution::Sequential)?, y)?;
    let per_feature = map_range(x.n_features(), exec, |j| -> Result<Vec<f64>, SurvivalError> {
        let mut rng = tree_rng(seed, j);
        let mut xp = x.clone();
        (0..repeats)
            .map(|_| {
                let mut col = x.column(j).to_vec();
                col.shuffle(&mut rng);
                xp.set_column(j, col);
                Ok(base - concordance_index(&model.predict_risk(&xp, Execution::Sequential)?, y)?)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(x.n_features());
    for (j, drops) in per_feature.into_iter().enumerate() {
        let drops = drops?;
        let mean = drops.iter().sum::<f64>() / drops.len() as f64;
        let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / drops.len() as f64;
        out.push((j, FeatureImportance { feature: x.names()[j].clone(), importance: mean, std_dev: var.sqrt() }));
    }
    out.sort_by(|a, b| b.1.importance.total_cmp(&a.1.importance).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(_, f)| f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::forest::{fit_forest, ForestConfig};
    use crate::synth::weibull::{weibull_cohort, WeibullConfig};
    use rand::SeedableRng;

    #[test]
    fn driver_ranks_first_and_constant_is_inert() {
        let d = weibull_cohort(&WeibullConfig { n: 500, ..Default::default() }, 21);
        let mut names = d.x.names().to_vec();
        names.push("constant".into());
        let mut cols = d.x.columns().to_vec();
        cols.push(vec![1.0; d.len()]);
        let x = FeatureMatrix::new(names, cols).unwrap();
        let data = crate::survival::SurvivalData::new(x, d.y.clone()).unwrap();
        let (train, test) = data.train_test_split(0.3, 1);
        let m = fit_forest(&train, &ForestConfig { n_trees: 40, ..Default::default() }).unwrap();
        let imp = permutation_importance(&m, &test.x, &test.y, 3, 5, Execution::Parallel).unwrap();
        assert_eq!(imp[0].feature, "group");
        let constant = imp.iter().find(|f| f.feature == "constant").unwrap();
        assert!(constant.importance.abs() <= 0.01);
        let again = permutation_importance(&m, &test.x, &test.y, 3, 5, Execution::Sequential).unwrap();
        assert_eq!(imp, again);
    }

    #[test]
    fn permuting_everything_destroys_ranking() {
        let d = weibull_cohort(&WeibullConfig { n: 600, ..Default::default() }, 22);
        let (train, test) = d.train_test_split(0.5, 2);
        let m = fit_forest(&train, &ForestConfig { n_trees: 40, ..Default::default() }).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut x = test.x.clone();
        for j in 0..x.n_features() {
            let mut c = x.column(j).to_vec();
            c.shuffle(&mut rng);
            x.set_column(j, c);
        }
        let c = concordance_index(&m.predict_risk(&x, Execution::Parallel).unwrap(), &test.y).unwrap();
        assert!((c - 0.5).abs() <= 0.05, "{c}");
    }
}
