//! Randomized hyperparameter search over cross-validated AUROC.
//!
//! A trial's assignment is a JSON object of dotted parameter paths, applied
//! on top of the learner's defaults. Each trial draws from its own stream,
//! so trials can be evaluated in any order or concurrently.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{evaluate_folds, PreparedFolds};
use crate::error::{OdrError, Result};
use crate::learners::LearnerSpec;
use crate::rng;

const STREAM_SEARCH: u64 = 0x5ea4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ParamDist {
    /// Uniform integer in `lo..=hi`.
    Int { lo: i64, hi: i64 },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    Choice { values: Vec<Value> },
}

impl ParamDist {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            ParamDist::Int { lo, hi } => lo <= hi,
            ParamDist::Uniform { lo, hi } => lo <= hi && lo.is_finite() && hi.is_finite(),
            ParamDist::LogUniform { lo, hi } => *lo > 0.0 && lo <= hi && hi.is_finite(),
            ParamDist::Choice { values } => !values.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(OdrError::Config(format!("search parameter `{name}` has an empty range")))
        }
    }

    fn sample(&self, r: &mut rng::Rng) -> Value {
        match self {
            ParamDist::Int { lo, hi } => Value::from(r.random_range(*lo..=*hi)),
            ParamDist::Uniform { lo, hi } => Value::from(if lo == hi { *lo } else { r.random_range(*lo..*hi) }),
            ParamDist::LogUniform { lo, hi } => {
                let v = if lo == hi {
                    *lo
                } else {
                    r.random_range(lo.ln()..hi.ln()).exp()
                };
                Value::from(v)
            }
            ParamDist::Choice { values } => values[r.random_range(0..values.len())].clone(),
        }
    }
}

/// Distributions keyed by dotted parameter path, e.g. `tree.max_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learner: String,
    pub params: BTreeMap<String, ParamDist>,
}

/// The per-learner ranges: tree depths run from 10 up to the number of
/// features, learning rates are log-uniform.
pub fn default_space(kind: &str, n_features: usize) -> Result<SearchSpace> {
    use ParamDist::*;
    let depth = Int {
        lo: 10,
        hi: (n_features as i64).max(10),
    };
    let int = |lo, hi| Int { lo, hi };
    let choice = |values: Vec<Value>| Choice { values };
    let spec = LearnerSpec::default_for(kind)?;
    let params: Vec<(&str, ParamDist)> = match spec {
        LearnerSpec::Knn(_) => vec![
            ("k", int(1, 10)),
            ("weights", choice(vec!["uniform".into(), "distance".into()])),
            ("metric", choice(vec!["manhattan".into(), "euclidean".into()])),
        ],
        LearnerSpec::DecisionTree(_) => vec![
            ("max_depth", depth),
            ("min_samples_split", int(2, 20)),
            ("min_samples_leaf", int(2, 20)),
        ],
        LearnerSpec::RandomForest(_) => vec![
            ("n_trees", int(10, 200)),
            ("tree.max_depth", depth),
            ("tree.min_samples_split", int(2, 20)),
            ("tree.min_samples_leaf", int(2, 20)),
        ],
        LearnerSpec::Gbdt(_) => vec![
            ("n_trees", int(150, 1000)),
            ("learning_rate", LogUniform { lo: 0.01, hi: 0.6 }),
            ("max_depth", depth),
            ("subsample", Uniform { lo: 0.3, hi: 0.9 }),
            ("colsample", Uniform { lo: 0.5, hi: 0.9 }),
            ("min_child_weight", int(1, 4)),
        ],
        LearnerSpec::Mlp(_) => {
            let shapes = (1..=3usize)
                .flat_map(|layers| [32u64, 64, 128, 256].map(move |w| Value::from(vec![w; layers])))
                .collect();
            vec![
                ("hidden_layers", choice(shapes)),
                ("activation", choice(vec!["tanh".into(), "relu".into(), "logistic".into()])),
                ("solver", choice(vec!["adam".into(), "lbfgs".into()])),
                ("alpha", choice(vec![1e-4.into(), 1e-3.into(), 1e-2.into()])),
            ]
        }
        LearnerSpec::Majority | LearnerSpec::GaussianNb(_) => vec![],
    };
    Ok(SearchSpace {
        learner: spec.kind().to_string(),
        params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    })
}

/// Applies a dotted-path assignment to the learner's default parameters.
pub fn apply_assignment(kind: &str, assignment: &BTreeMap<String, Value>) -> Result<LearnerSpec> {
    let base = serde_json::to_value(LearnerSpec::default_for(kind)?).map_err(|e| OdrError::Config(e.to_string()))?;
    let mut value = base;
    for (path, v) in assignment {
        let mut at = value
            .get_mut("params")
            .ok_or_else(|| OdrError::Config(format!("learner `{kind}` has no parameters")))?;
        let parts: Vec<&str> = path.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            at = at
                .get_mut(*p)
                .ok_or_else(|| OdrError::Config(format!("unknown parameter `{path}`")))?;
        }
        let leaf = parts[parts.len() - 1];
        let obj = at
            .as_object_mut()
            .filter(|o| o.contains_key(leaf))
            .ok_or_else(|| OdrError::Config(format!("unknown parameter `{path}`")))?;
        obj.insert(leaf.to_string(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| OdrError::Config(format!("search assignment: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub index: usize,
    pub assignment: BTreeMap<String, Value>,
    pub spec: LearnerSpec,
    pub mean_auroc: f64,
    pub fold_aurocs: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub learner: String,
    pub best: usize,
    pub trials: Vec<SearchTrial>,
}

impl SearchReport {
    pub fn best_trial(&self) -> &SearchTrial {
        &self.trials[self.best]
    }
}

pub fn random_search(space: &SearchSpace, trials: usize, folds: &PreparedFolds, seed: u64) -> Result<SearchReport> {
    if space.params.is_empty() || trials == 0 {
        return Err(OdrError::Config(format!(
            "search space for `{}` is empty",
            space.learner
        )));
    }
    for (name, d) in &space.params {
        d.validate(name)?;
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|index| {
            let trial_seed = rng::derive_seed(seed, &[STREAM_SEARCH, index as u64]);
            let mut r = rng::derive(trial_seed, &[0]);
            let assignment: BTreeMap<String, Value> = space
                .params
                .iter()
                .map(|(k, d)| (k.clone(), d.sample(&mut r)))
                .collect();
            let spec = apply_assignment(&space.learner, &assignment)?;
            let cv = evaluate_folds(&spec, folds, None, trial_seed)?;
            Ok(SearchTrial {
                index,
                assignment,
                spec,
                fold_aurocs: cv.fold_aurocs(),
                mean_auroc: cv.mean.auroc,
                seed: trial_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, t) in results.iter().enumerate() {
        if t.mean_auroc > results[best].mean_auroc {
            best = i;
        }
    }
    Ok(SearchReport {
        learner: space.learner.clone(),
        best,
        trials: results,
    })
}
