//! Decision-path attribution for tree ensembles.
//!
//! Every node carries an expected value: the cover-weighted mean of the leaf
//! weights below it. Walking a row's path, each split's feature is credited
//! with the change in expected value from the node to the child taken. The
//! credits telescope, so bias plus contributions reproduces the margin.

use serde::{Deserialize, Serialize};

use crate::error::{OdrError, Result};
use crate::learners::{sigmoid, Tree, TreeEnsembleModel, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAttribution {
    /// Base score plus the scaled root expectation of every tree.
    pub bias: f64,
    /// One entry per feature, in column order.
    pub contributions: Vec<f64>,
    pub margin: f64,
    pub probability: f64,
}

impl PathAttribution {
    /// Feature indices ordered by |contribution|, largest first, zero
    /// contributions dropped.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.contributions.len())
            .filter(|&j| self.contributions[j] != 0.0)
            .collect();
        idx.sort_by(|&a, &b| {
            self.contributions[b]
                .abs()
                .total_cmp(&self.contributions[a].abs())
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Expected value of every node of one tree.
fn expectations(tree: &Tree) -> Result<Vec<f64>> {
    let mut e = vec![0.0; tree.nodes.len()];
    // Children always follow their parent in the node array.
    for i in (0..tree.nodes.len()).rev() {
        e[i] = match tree.nodes[i] {
            TreeNode::Leaf { leaf, .. } => leaf,
            TreeNode::Split { l, r, .. } => {
                let cl = tree.nodes[l].cover().ok_or(OdrError::MissingCover)?;
                let cr = tree.nodes[r].cover().ok_or(OdrError::MissingCover)?;
                if cl + cr > 0.0 {
                    (cl * e[l] + cr * e[r]) / (cl + cr)
                } else {
                    0.5 * (e[l] + e[r])
                }
            }
        };
    }
    Ok(e)
}

/// Expected values of every node of every tree, computed once per model.
#[derive(Debug, Clone)]
pub struct PathExplainer<'a> {
    model: &'a TreeEnsembleModel,
    expected: Vec<Vec<f64>>,
    bias: f64,
}

impl<'a> PathExplainer<'a> {
    /// Fails with [`OdrError::MissingCover`] when a split child has no cover.
    pub fn new(model: &'a TreeEnsembleModel) -> Result<Self> {
        let expected = model
            .trees
            .iter()
            .map(expectations)
            .collect::<Result<Vec<_>>>()?;
        let bias = model.base_score + expected.iter().map(|e| model.eta * e[0]).sum::<f64>();
        Ok(PathExplainer { model, expected, bias })
    }

    pub fn explain(&self, row: &[f64]) -> Result<PathAttribution> {
        if row.len() != self.model.n_features {
            return Err(OdrError::InvalidInput(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.model.n_features
            )));
        }
        let mut contributions = vec![0.0; row.len()];
        for (tree, e) in self.model.trees.iter().zip(&self.expected) {
            let path = tree.path(row);
            for w in path.windows(2) {
                if let TreeNode::Split { f, .. } = tree.nodes[w[0]] {
                    contributions[f] += self.model.eta * (e[w[1]] - e[w[0]]);
                }
            }
        }
        let margin = self.model.predict_margin(row);
        Ok(PathAttribution {
            bias: self.bias,
            contributions,
            margin,
            probability: sigmoid(margin),
        })
    }
}

pub fn path_attribution(model: &TreeEnsembleModel, row: &[f64]) -> Result<PathAttribution> {
    PathExplainer::new(model)?.explain(row)
}
