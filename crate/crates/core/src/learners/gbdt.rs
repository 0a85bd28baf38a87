//! Gradient-boosted trees on logistic loss with exact greedy split search.
//!
//! Trees grow level by level. For each level every sampled feature is
//! scanned once in presorted order, accumulating gradient and hessian sums
//! for all open nodes at the same time. Missing values (NaN) are routed to
//! whichever side gives the larger gain.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_odds, logistic_grad_hess, sigmoid, Dataset};
use crate::error::{OdrError, Result};
use crate::features::Matrix;
use crate::rng;

const STREAM_TREE: u64 = 0x6bd7;
const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub min_child_weight: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain for a split to be kept.
    pub gamma: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_trees: 200,
            learning_rate: 0.1,
            max_depth: 6,
            subsample: 0.8,
            colsample: 0.8,
            min_child_weight: 1.0,
            lambda: 1.0,
            gamma: 0.0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(OdrError::Config(format!("gbdt: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("colsample must be in (0, 1]");
        }
        if !(self.min_child_weight >= 0.0 && self.lambda >= 0.0 && self.gamma >= 0.0) {
            return bad("min_child_weight, lambda and gamma must be non-negative");
        }
        Ok(())
    }
}

/// One node of a boosted tree. Serialized as `{f,t,miss_left,l,r,...}` for
/// splits and `{leaf,...}` for leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        f: usize,
        t: f64,
        miss_left: bool,
        l: usize,
        r: usize,
        gain: f64,
        /// Hessian sum of the training rows reaching the node.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<f64>,
    },
    Leaf {
        leaf: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<f64>,
    },
}

impl TreeNode {
    pub fn cover(&self) -> Option<f64> {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

/// `true` when a value goes to the left child of a split.
pub fn goes_left(value: f64, threshold: f64, miss_left: bool) -> bool {
    if value.is_nan() {
        miss_left
    } else {
        value < threshold
    }
}

/// Flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Node indices from the root to the leaf reached by `row`.
    pub fn path(&self, row: &[f64]) -> Vec<usize> {
        let mut at = 0;
        let mut out = vec![0];
        while let TreeNode::Split {
            f, t, miss_left, l, r, ..
        } = self.nodes[at]
        {
            at = if goes_left(row[f], t, miss_left) { l } else { r };
            out.push(at);
        }
        out
    }

    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { leaf, .. } => return leaf,
                TreeNode::Split {
                    f, t, miss_left, l, r, ..
                } => at = if goes_left(row[f], t, miss_left) { l } else { r },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { l, r, .. } => 1 + walk(nodes, l).max(walk(nodes, r)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Structural checks: children in range, finite weights.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(OdrError::Model("tree has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                TreeNode::Leaf { leaf, .. } if !leaf.is_finite() => {
                    return Err(OdrError::Model(format!("node {i}: non-finite leaf weight")))
                }
                TreeNode::Split { f, t, l, r, .. } => {
                    if f >= n_features || t.is_nan() {
                        return Err(OdrError::Model(format!("node {i}: bad split")));
                    }
                    if l <= i || r <= i || l >= self.nodes.len() || r >= self.nodes.len() {
                        return Err(OdrError::Model(format!("node {i}: bad child index")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub schema_hash: String,
    pub n_features: usize,
    /// Prior log-odds of the training labels.
    pub base_score: f64,
    pub eta: f64,
    pub params: GbdtParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl TreeEnsembleModel {
    pub fn predict_margin(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.eta * t.leaf_value(row))
                .sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.predict_margin(row))
    }

    /// The first `k` trees only.
    pub fn truncated(&self, k: usize) -> TreeEnsembleModel {
        TreeEnsembleModel {
            trees: self.trees[..k.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() || !self.eta.is_finite() {
            return Err(OdrError::Model("non-finite base score or eta".into()));
        }
        self.trees
            .iter()
            .try_for_each(|t| t.validate(self.n_features))
    }
}

/// Non-missing rows of each column sorted by (value, row), their values in
/// the same order, and the missing rows of each column.
pub(crate) struct Presorted {
    pub order: Vec<Vec<u32>>,
    pub values: Vec<Vec<f64>>,
    pub missing: Vec<Vec<u32>>,
    /// Per column: each row's index into `distinct`, or `MISSING_RANK`.
    pub ranks: Vec<Vec<u32>>,
    /// Per column: the distinct present values, ascending.
    pub distinct: Vec<Vec<f64>>,
}

pub(crate) const MISSING_RANK: u32 = u32::MAX;

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let per_column: Vec<(Vec<u32>, Vec<f64>, Vec<u32>)> = (0..x.n_cols)
            .into_par_iter()
            .map(|j| {
                let column = x.column(j);
                let mut present = Vec::with_capacity(x.n_rows);
                let mut missing = Vec::new();
                for (i, v) in column.iter().enumerate() {
                    if v.is_nan() {
                        missing.push(i as u32);
                    } else {
                        present.push(i as u32);
                    }
                }
                present.sort_by(|&a, &b| column[a as usize].total_cmp(&column[b as usize]).then(a.cmp(&b)));
                let values = present.iter().map(|&r| column[r as usize]).collect();
                (present, values, missing)
            })
            .collect();
        let mut sorted = Presorted {
            order: Vec::with_capacity(x.n_cols),
            values: Vec::with_capacity(x.n_cols),
            missing: Vec::with_capacity(x.n_cols),
            ranks: Vec::with_capacity(x.n_cols),
            distinct: Vec::with_capacity(x.n_cols),
        };
        for (o, v, m) in per_column {
            let mut ranks = vec![MISSING_RANK; x.n_rows];
            let mut distinct: Vec<f64> = Vec::new();
            for (&r, &val) in o.iter().zip(&v) {
                if distinct.last().is_none_or(|&d| val > d) {
                    distinct.push(val);
                }
                ranks[r as usize] = (distinct.len() - 1) as u32;
            }
            sorted.order.push(o);
            sorted.values.push(v);
            sorted.missing.push(m);
            sorted.ranks.push(ranks);
            sorted.distinct.push(distinct);
        }
        sorted
    }
}

/// Threshold strictly above `lo` and at most `hi`, so `lo` goes left and
/// `hi` goes right.
pub(crate) fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * lo + 0.5 * hi;
    if mid > lo {
        mid
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    miss_left: bool,
    gain: f64,
    g_left: f64,
    h_left: f64,
}

#[derive(Debug, Clone, Copy)]
struct OpenNode {
    index: usize,
    g: f64,
    h: f64,
}

/// A row's gradient pair and open-node slot, packed for the scans.
#[derive(Debug, Clone, Copy)]
struct RowState {
    g: f64,
    h: f64,
    node: u32,
}

/// Running sums for one open node while a feature is scanned.
#[derive(Debug, Clone, Copy)]
struct Slot {
    gl: f64,
    hl: f64,
    gm: f64,
    hm: f64,
    last: f64,
    seen: bool,
    best_score: f64,
    /// (value below, value above, miss_left, G_left, H_left)
    best: Option<(f64, f64, bool, f64, f64)>,
}

impl Default for Slot {
    fn default() -> Self {
        Slot {
            gl: 0.0,
            hl: 0.0,
            gm: 0.0,
            hm: 0.0,
            last: 0.0,
            seen: false,
            best_score: f64::NEG_INFINITY,
            best: None,
        }
    }
}

impl Slot {
    /// Adds mass at value `v` (ascending), first scoring the split between
    /// the previous value and `v`. Missing rows try the left side first;
    /// with no missing rows both directions coincide and left is kept.
    #[inline]
    fn push(&mut self, growth: &Growth, node: OpenNode, v: f64, g: f64, h: f64) {
        if self.seen && v > self.last {
            let mcw = growth.params.min_child_weight;
            for miss_left in [true, false] {
                if !miss_left && self.hm == 0.0 {
                    break;
                }
                let (cg, ch) = if miss_left {
                    (self.gl + self.gm, self.hl + self.hm)
                } else {
                    (self.gl, self.hl)
                };
                if ch < mcw || node.h - ch < mcw {
                    continue;
                }
                let score = growth.score(cg, ch) + growth.score(node.g - cg, node.h - ch);
                if score > self.best_score {
                    self.best_score = score;
                    self.best = Some((self.last, v, miss_left, cg, ch));
                }
            }
        }
        self.gl += g;
        self.hl += h;
        self.last = v;
        self.seen = true;
    }

    fn finish(&mut self, growth: &Growth, node: OpenNode, feature: usize) -> Option<Candidate> {
        let mcw = growth.params.min_child_weight;
        // Present values left, missing values right.
        if self.seen && self.hm > 0.0 && self.hl >= mcw && self.hm >= mcw {
            let score = growth.score(self.gl, self.hl) + growth.score(self.gm, self.hm);
            if score > self.best_score {
                self.best_score = score;
                self.best = Some((self.last, f64::MAX, false, self.gl, self.hl));
            }
        }
        let (lo, hi, miss_left, g_left, h_left) = self.best?;
        let gain = 0.5 * (self.best_score - growth.score(node.g, node.h)) - growth.params.gamma;
        (gain > 0.0).then(|| Candidate {
            feature,
            threshold: if hi == f64::MAX { hi } else { split_threshold(lo, hi) },
            miss_left,
            gain,
            g_left,
            h_left,
        })
    }
}

struct Growth<'a> {
    x: &'a Matrix,
    sorted: &'a Presorted,
    /// Gradient and hessian per row.
    gh: &'a [[f64; 2]],
    params: &'a GbdtParams,
}

impl Growth<'_> {
    #[cfg(test)]
    fn gain(&self, gl: f64, hl: f64, g: f64, h: f64) -> f64 {
        let l = self.params.lambda;
        let (gr, hr) = (g - gl, h - hl);
        0.5 * (gl * gl / (hl + l) + gr * gr / (hr + l) - g * g / (h + l)) - self.params.gamma
    }

    /// `G^2 / (H + lambda)`; a split's gain is half the children's scores
    /// minus the parent's, less gamma.
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    /// Best split of feature `j` for every open node.
    ///
    /// Candidates are the midpoints between consecutive distinct values of
    /// each node's rows. When the feature has few distinct values the rows
    /// are first summed per (node, value) in one sequential pass; otherwise
    /// they are visited in presorted order. Both enumerate the same splits.
    fn scan(&self, j: usize, open: &[OpenNode], state: &[RowState]) -> Vec<Option<Candidate>> {
        let k = open.len();
        let mut slots = vec![Slot::default(); k];
        let distinct = &self.sorted.distinct[j];
        let u = distinct.len();
        if u * k <= 2 * self.x.n_rows {
            let ranks = &self.sorted.ranks[j];
            let mut bins = vec![[0.0f64; 2]; k * u];
            let mut counts = vec![0u32; k * u];
            for (st, &rk) in state.iter().zip(ranks) {
                let RowState { g, h, node: s } = *st;
                if s == NO_NODE {
                    continue;
                }
                if rk == MISSING_RANK {
                    slots[s as usize].gm += g;
                    slots[s as usize].hm += h;
                } else {
                    let at = s as usize * u + rk as usize;
                    bins[at][0] += g;
                    bins[at][1] += h;
                    counts[at] += 1;
                }
            }
            for (s, st) in slots.iter_mut().enumerate() {
                for rk in 0..u {
                    let at = s * u + rk;
                    if counts[at] > 0 {
                        st.push(self, open[s], distinct[rk], bins[at][0], bins[at][1]);
                    }
                }
            }
        } else {
            for &r in &self.sorted.missing[j] {
                let RowState { g, h, node: s } = state[r as usize];
                if s != NO_NODE {
                    slots[s as usize].gm += g;
                    slots[s as usize].hm += h;
                }
            }
            for (&r, &v) in self.sorted.order[j].iter().zip(&self.sorted.values[j]) {
                let RowState { g, h, node: s } = state[r as usize];
                if s != NO_NODE {
                    slots[s as usize].push(self, open[s as usize], v, g, h);
                }
            }
        }
        slots
            .iter_mut()
            .zip(open)
            .map(|(st, node)| st.finish(self, *node, j))
            .collect()
    }

    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.lambda)
    }

    fn grow(&self, rows: &[u32], features: &[usize]) -> Tree {
        let n = self.x.n_rows;
        let mut node_of = vec![NO_NODE; n];
        let (mut g0, mut h0) = (0.0, 0.0);
        for &r in rows {
            node_of[r as usize] = 0;
            let [g, h] = self.gh[r as usize];
            g0 += g;
            h0 += h;
        }
        let mut nodes = vec![TreeNode::Leaf {
            leaf: self.leaf_weight(g0, h0),
            cover: Some(h0),
        }];
        let mut open = vec![OpenNode {
            index: 0,
            g: g0,
            h: h0,
        }];
        for _depth in 0..self.params.max_depth {
            if open.is_empty() {
                break;
            }
            let state: Vec<RowState> = node_of
                .iter()
                .zip(self.gh)
                .map(|(&node, &[g, h])| RowState { g, h, node })
                .collect();
            let per_feature: Vec<Vec<Option<Candidate>>> = features
                .par_iter()
                .map(|&j| self.scan(j, &open, &state))
                .collect();
            // Features are in ascending order and thresholds ascend within a
            // feature, so keeping only strict improvements picks the lowest
            // (feature, threshold) among equal gains.
            let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
            for cands in &per_feature {
                for (s, c) in cands.iter().enumerate() {
                    if let Some(c) = c {
                        if best[s].is_none_or(|b| c.gain > b.gain) {
                            best[s] = Some(*c);
                        }
                    }
                }
            }
            let mut next_open = Vec::new();
            // Maps an open slot to (left slot, right slot) at the next level.
            let mut remap: Vec<Option<(u32, u32)>> = vec![None; open.len()];
            for (s, c) in best.iter().enumerate() {
                let Some(c) = c else { continue };
                let node = open[s];
                let (gr, hr) = (node.g - c.g_left, node.h - c.h_left);
                let l = nodes.len();
                nodes.push(TreeNode::Leaf {
                    leaf: self.leaf_weight(c.g_left, c.h_left),
                    cover: Some(c.h_left),
                });
                nodes.push(TreeNode::Leaf {
                    leaf: self.leaf_weight(gr, hr),
                    cover: Some(hr),
                });
                nodes[node.index] = TreeNode::Split {
                    f: c.feature,
                    t: c.threshold,
                    miss_left: c.miss_left,
                    l,
                    r: l + 1,
                    gain: c.gain,
                    cover: Some(node.h),
                };
                let ls = next_open.len() as u32;
                next_open.push(OpenNode {
                    index: l,
                    g: c.g_left,
                    h: c.h_left,
                });
                next_open.push(OpenNode {
                    index: l + 1,
                    g: gr,
                    h: hr,
                });
                remap[s] = Some((ls, ls + 1));
            }
            for &r in rows {
                let s = node_of[r as usize];
                if s == NO_NODE {
                    continue;
                }
                node_of[r as usize] = match (remap[s as usize], best[s as usize]) {
                    (Some((ls, rs)), Some(c)) => {
                        if goes_left(self.x.get(r as usize, c.feature), c.threshold, c.miss_left) {
                            ls
                        } else {
                            rs
                        }
                    }
                    _ => NO_NODE,
                };
            }
            open = next_open;
        }
        Tree { nodes }
    }
}

/// Fit a boosted ensemble. Row and column subsamples are drawn per tree
/// from streams derived from `seed`.
pub fn train_gbdt(data: &Dataset, params: &GbdtParams, seed: u64) -> Result<TreeEnsembleModel> {
    params.validate()?;
    data.validate()?;
    let x = &data.x;
    let n = x.n_rows;
    let prior = data.positives() as f64 / n as f64;
    let base_score = log_odds(prior);
    let sorted = Presorted::new(x);
    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let n_rows_sampled = ((params.subsample * n as f64).floor() as usize).clamp(1, n);
    let n_cols_sampled = ((params.colsample * x.n_cols as f64).round() as usize).clamp(1, x.n_cols.max(1));
    for t in 0..params.n_trees {
        let mut r = rng::derive(seed, &[STREAM_TREE, t as u64]);
        let mut rows: Vec<u32> = if n_rows_sampled == n {
            (0..n as u32).collect()
        } else {
            index::sample(&mut r, n, n_rows_sampled)
                .into_iter()
                .map(|i| i as u32)
                .collect()
        };
        rows.sort_unstable();
        let mut features: Vec<usize> = if n_cols_sampled == x.n_cols {
            (0..x.n_cols).collect()
        } else {
            index::sample(&mut r, x.n_cols, n_cols_sampled).into_vec()
        };
        features.sort_unstable();
        let gh: Vec<[f64; 2]> = margins
            .iter()
            .zip(&data.y)
            .map(|(&m, &y)| {
                let (g, h) = logistic_grad_hess(m, y);
                [g, h]
            })
            .collect();
        let growth = Growth {
            x,
            sorted: &sorted,
            gh: &gh,
            params,
        };
        let tree = growth.grow(&rows, &features);
        margins
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m += params.learning_rate * tree.leaf_value(x.row(i)));
        trees.push(tree);
    }
    Ok(TreeEnsembleModel {
        schema_hash: data.schema_hash.clone(),
        n_features: x.n_cols,
        base_score,
        eta: params.learning_rate,
        params: params.clone(),
        seed,
        trees,
    })
}
