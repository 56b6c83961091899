//! Random survival forest: bootstrap trees grown by maximizing the
//! log-rank statistic, Nelson-Aalen leaves, ensemble averaged on the
//! training event-time grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{map_range, Execution};

use super::curves::{nelson_aalen, risk_table, SurvivalFunction};
use super::data::{schema_hash, FeatureMatrix, SurvivalData, SurvivalRecord};
use super::logrank::NodeEvents;
use super::SurvivalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means ceil(sqrt(p)).
    pub mtry: Option<usize>,
    pub min_leaf_size: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 300, mtry: None, min_leaf_size: 15, max_depth: None, seed: 42 }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub n_samples: usize,
    pub event_times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
    pub survival: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= value` go left.
    Split { feature: usize, value: f64, left: usize, right: usize },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl SurvivalTree {
    pub fn leaf_for(&self, row: &[f64]) -> &Leaf {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, value, left, right } => i = if row[*feature] <= *value { *left } else { *right },
                Node::Leaf(l) => return l,
            }
        }
    }

    pub fn root_feature(&self) -> Option<usize> {
        match &self.nodes[0] {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf(_) => None,
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalForestModel {
    pub feature_names: Vec<String>,
    pub schema_hash: String,
    pub config: ForestConfig,
    /// Distinct training event times; every leaf step lies on this grid.
    pub time_grid: Vec<f64>,
    pub trees: Vec<SurvivalTree>,
}

pub(crate) fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub(crate) fn bootstrap(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn make_leaf(y: &[SurvivalRecord], samples: &[usize]) -> Leaf {
    let recs: Vec<SurvivalRecord> = samples.iter().map(|&i| y[i]).collect();
    let h = nelson_aalen(&recs).expect("leaves are non-empty");
    Leaf {
        n_samples: samples.len(),
        event_times: h.times().to_vec(),
        cumulative_hazard: h.hazard().to_vec(),
        survival: h.hazard().iter().map(|v| (-v).exp()).collect(),
    }
}

struct Candidate {
    stat: f64,
    feature: usize,
    cut: f64,
}

fn grow_tree(data: &SurvivalData, cfg: &ForestConfig, mtry: usize, tree_index: usize) -> SurvivalTree {
    let mut rng = tree_rng(cfg.seed, tree_index);
    let n = data.len();
    let p = data.x.n_features();
    let root = bootstrap(&mut rng, n);
    let min_leaf = cfg.min_leaf_size.max(1);

    let mut nodes: Vec<Option<Node>> = vec![None];
    let mut stack = vec![(0usize, root, 0usize)];
    while let Some((id, samples, depth)) = stack.pop() {
        let splittable = samples.len() >= 2 * min_leaf && cfg.max_depth.is_none_or(|d| depth < d);
        let mut best: Option<Candidate> = None;
        if splittable {
            let recs: Vec<SurvivalRecord> = samples.iter().map(|&i| data.y[i]).collect();
            if let Some(events) = NodeEvents::new(&recs) {
                for feature in rand::seq::index::sample(&mut rng, p, mtry) {
                    let col = data.x.column(feature);
                    let values: Vec<f64> = samples.iter().map(|&i| col[i]).collect();
                    events.sweep(&values, min_leaf, |cut, _, stat| {
                        if best.as_ref().is_none_or(|b| stat > b.stat) {
                            best = Some(Candidate { stat, feature, cut });
                        }
                    });
                }
            }
        }
        match best {
            Some(Candidate { feature, cut, .. }) => {
                let col = data.x.column(feature);
                let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| col[i] <= cut);
                let (li, ri) = (nodes.len(), nodes.len() + 1);
                nodes.push(None);
                nodes.push(None);
                nodes[id] = Some(Node::Split { feature, value: cut, left: li, right: ri });
                stack.push((ri, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
            None => nodes[id] = Some(Node::Leaf(make_leaf(&data.y, &samples))),
        }
    }
    SurvivalTree { nodes: nodes.into_iter().map(|n| n.expect("every node is filled")).collect() }
}

pub fn fit_forest(data: &SurvivalData, cfg: &ForestConfig) -> Result<SurvivalForestModel, SurvivalError> {
    fit_forest_with(data, cfg, Execution::default())
}

/// As [`fit_forest`], choosing sequential or parallel tree growth. Both
/// produce identical models.
pub fn fit_forest_with(data: &SurvivalData, cfg: &ForestConfig, exec: Execution) -> Result<SurvivalForestModel, SurvivalError> {
    if cfg.n_trees == 0 || cfg.min_leaf_size == 0 {
        return Err(SurvivalError::InvalidInput("n_trees and min_leaf_size must be >= 1".into()));
    }
    let p = data.x.n_features();
    if p == 0 {
        return Err(SurvivalError::InvalidInput("no features".into()));
    }
    if let Some(m) = cfg.mtry {
        if m == 0 || m > p {
            return Err(SurvivalError::InvalidInput(format!("mtry {m} outside 1..={p}")));
        }
    }
    let grid: Vec<f64> = risk_table(&data.y).iter().map(|r| r.time).collect();
    if grid.len() < 2 {
        return Err(SurvivalError::InsufficientEvents { distinct_event_times: grid.len() });
    }
    let mtry = cfg.resolved_mtry(p);
    let trees = map_range(cfg.n_trees, exec, |b| grow_tree(data, cfg, mtry, b));
    Ok(SurvivalForestModel {
        feature_names: data.x.names().to_vec(),
        schema_hash: schema_hash(data.x.names()),
        config: ForestConfig { mtry: Some(mtry), ..cfg.clone() },
        time_grid: grid,
        trees,
    })
}

impl SurvivalForestModel {
    pub fn check_schema(&self, x: &FeatureMatrix) -> Result<(), SurvivalError> {
        if x.names() != self.feature_names.as_slice() {
            return Err(SurvivalError::SchemaMismatch {
                expected: schema_hash(&self.feature_names),
                got: x.schema_hash(),
            });
        }
        Ok(())
    }

    fn grid_index(&self, t: f64) -> usize {
        self.time_grid.partition_point(|&g| g < t)
    }

    /// Ensemble survival and cumulative hazard on the model grid for one row.
    fn ensemble_row(&self, row: &[f64], want_survival: bool) -> (Vec<f64>, Vec<f64>) {
        let g = self.time_grid.len();
        let mut ds = if want_survival { vec![0.0; g] } else { Vec::new() };
        let mut dh = vec![0.0; g];
        for tree in &self.trees {
            let leaf = tree.leaf_for(row);
            let (mut prev_s, mut prev_h) = (1.0, 0.0);
            for (k, &t) in leaf.event_times.iter().enumerate() {
                let idx = self.grid_index(t);
                dh[idx] += leaf.cumulative_hazard[k] - prev_h;
                prev_h = leaf.cumulative_hazard[k];
                if want_survival {
                    ds[idx] += leaf.survival[k] - prev_s;
                    prev_s = leaf.survival[k];
                }
            }
        }
        let b = self.trees.len() as f64;
        let mut acc = 0.0;
        let chf: Vec<f64> = dh
            .iter()
            .map(|d| {
                acc += d;
                acc / b
            })
            .collect();
        let mut acc = 0.0;
        let surv: Vec<f64> = ds
            .iter()
            .map(|d| {
                acc += d;
                (1.0 + acc / b).clamp(0.0, 1.0)
            })
            .collect();
        (surv, chf)
    }

    pub fn predict_survival(&self, x: &FeatureMatrix, exec: Execution) -> Result<Vec<SurvivalFunction>, SurvivalError> {
        self.check_schema(x)?;
        Ok(map_range(x.n_rows(), exec, |i| {
            let (s, _) = self.ensemble_row(&x.row(i), true);
            SurvivalFunction::from_parts_unchecked(self.time_grid.clone(), s)
        }))
    }

    /// Ensemble mortality: the mean cumulative hazard summed over the grid.
    pub fn predict_risk(&self, x: &FeatureMatrix, exec: Execution) -> Result<Vec<f64>, SurvivalError> {
        self.check_schema(x)?;
        Ok(map_range(x.n_rows(), exec, |i| self.ensemble_row(&x.row(i), false).1.iter().sum()))
    }

    /// S-bar(t) for every row.
    pub fn survival_at(&self, x: &FeatureMatrix, t: f64, exec: Execution) -> Result<Vec<f64>, SurvivalError> {
        Ok(self.predict_survival(x, exec)?.iter().map(|s| s.at(t)).collect())
    }
}

pub fn predict_survival(model: &SurvivalForestModel, x: &FeatureMatrix) -> Result<Vec<SurvivalFunction>, SurvivalError> {
    model.predict_survival(x, Execution::default())
}

pub fn predict_risk(model: &SurvivalForestModel, x: &FeatureMatrix) -> Result<Vec<f64>, SurvivalError> {
    model.predict_risk(x, Execution::default())
}
