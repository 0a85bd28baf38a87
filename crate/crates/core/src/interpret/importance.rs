//! Gain importance: the mean stored split gain of each feature.

use serde::{Deserialize, Serialize};

use crate::domain::Family;
use crate::features::FeatureSchema;
use crate::learners::{TreeEnsembleModel, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub feature: String,
    pub index: usize,
    pub family: Option<Family>,
    /// Mean loss reduction over the splits using the feature.
    pub gain: f64,
    pub split_count: usize,
}

/// Used features ordered by mean gain, highest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub rows: Vec<GainRow>,
}

impl GainReport {
    pub fn top(&self, k: usize) -> &[GainRow] {
        &self.rows[..k.min(self.rows.len())]
    }
}

/// Column names come from `schema` when given, otherwise `x{j}`.
pub fn gain_importance(model: &TreeEnsembleModel, schema: Option<&FeatureSchema>) -> GainReport {
    let mut total = vec![0.0; model.n_features];
    let mut count = vec![0usize; model.n_features];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let TreeNode::Split { f, gain, .. } = *node {
                total[f] += gain;
                count[f] += 1;
            }
        }
    }
    let mut rows: Vec<GainRow> = (0..model.n_features)
        .filter(|&j| count[j] > 0)
        .map(|j| {
            let column = schema.and_then(|s| s.columns.get(j));
            GainRow {
                feature: column.map_or_else(|| format!("x{j}"), |c| c.name.clone()),
                index: j,
                family: column.map(|c| c.family),
                gain: total[j] / count[j] as f64,
                split_count: count[j],
            }
        })
        .collect();
    rows.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.index.cmp(&b.index)));
    GainReport { rows }
}
