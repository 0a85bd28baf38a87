//! CART classification trees with Gini impurity, and bagged forests of them.
//!
//! Nodes are split depth first. At each node the candidate features are
//! sorted by a precomputed global rank, scanned once, and the split with the
//! largest weighted impurity decrease wins. Rows carry integer weights so a
//! bootstrap sample is just a weight vector.

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbdt::{goes_left, split_threshold, Presorted};
use super::Dataset;
use crate::error::{OdrError, Result};
use crate::features::Matrix;
use crate::rng;

const STREAM_FOREST: u64 = 0xf0e5;
const MISSING_RANK: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, n_cols: usize) -> usize {
        match self {
            MaxFeatures::All => n_cols,
            MaxFeatures::Sqrt => (n_cols as f64).sqrt().round() as usize,
            MaxFeatures::Count(k) => k,
        }
        .clamp(1, n_cols.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartParams {
    /// `None` grows until the other limits stop it.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: None,
            min_samples_split: 10,
            min_samples_leaf: 20,
            max_features: MaxFeatures::All,
        }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 || self.min_samples_leaf < 1 {
            return Err(OdrError::Config(
                "cart: min_samples_split >= 2 and min_samples_leaf >= 1 required".into(),
            ));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(OdrError::Config("cart: max_features must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: CartParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            bootstrap: true,
            tree: CartParams {
                max_depth: None,
                min_samples_split: 11,
                min_samples_leaf: 12,
                max_features: MaxFeatures::Sqrt,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CartNode {
    Split {
        f: usize,
        t: f64,
        miss_left: bool,
        l: usize,
        r: usize,
        /// Weighted Gini decrease.
        gain: f64,
    },
    Leaf {
        /// Weighted share of positive rows.
        p: f64,
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CartTree {
    pub nodes: Vec<CartNode>,
}

impl CartTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                CartNode::Leaf { p, .. } => return p,
                CartNode::Split {
                    f, t, miss_left, l, r, ..
                } => at = if goes_left(row[f], t, miss_left) { l } else { r },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<CartTree>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Per-column rank of every row's value; equal values share a rank.
pub(crate) struct Ranks {
    ranks: Vec<Vec<u32>>,
}

impl Ranks {
    pub fn new(x: &Matrix) -> Self {
        let sorted = Presorted::new(x);
        let ranks = (0..x.n_cols)
            .into_par_iter()
            .map(|j| {
                let mut rk = vec![MISSING_RANK; x.n_rows];
                let mut current = 0u32;
                let mut prev = f64::NAN;
                for &r in &sorted.order[j] {
                    let v = x.get(r as usize, j);
                    if !prev.is_nan() && v > prev {
                        current += 1;
                    }
                    rk[r as usize] = current;
                    prev = v;
                }
                rk
            })
            .collect();
        Ranks { ranks }
    }
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    miss_left: bool,
    gain: f64,
}

/// Weighted count times Gini impurity: `2 p (w - p) / w`.
fn weighted_gini(pos: f64, w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        2.0 * pos * (w - pos) / w
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    weights: &'a [f64],
    ranks: &'a Ranks,
    params: &'a CartParams,
    n_candidates: usize,
}

impl Builder<'_> {
    fn totals(&self, rows: &[u32]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(w, p), &r| {
            let wi = self.weights[r as usize];
            (w + wi, p + wi * f64::from(self.y[r as usize]))
        })
    }

    fn best_split(&self, rows: &[u32], features: &[usize], w: f64, pos: f64) -> Option<Split> {
        let parent = weighted_gini(pos, w);
        let min_leaf = self.params.min_samples_leaf as f64;
        let tolerance = 1e-12 * w.max(1.0);
        let mut best: Option<Split> = None;
        let mut sorted: Vec<u32> = Vec::with_capacity(rows.len());
        for &j in features {
            let rank = &self.ranks.ranks[j];
            sorted.clear();
            let (mut wm, mut pm) = (0.0, 0.0);
            for &r in rows {
                if rank[r as usize] == MISSING_RANK {
                    wm += self.weights[r as usize];
                    pm += self.weights[r as usize] * f64::from(self.y[r as usize]);
                } else {
                    sorted.push(r);
                }
            }
            sorted.sort_unstable_by_key(|&r| (rank[r as usize], r));
            let mut consider = |wl: f64, pl: f64, threshold: f64, miss_left: bool| {
                let (wr, pr) = (w - wl, pos - pl);
                if wl < min_leaf || wr < min_leaf {
                    return;
                }
                let gain = parent - weighted_gini(pl, wl) - weighted_gini(pr, wr);
                if gain > tolerance && best.is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature: j,
                        threshold,
                        miss_left,
                        gain,
                    });
                }
            };
            let (mut wl, mut pl) = (0.0, 0.0);
            let mut last: Option<u32> = None;
            for &r in &sorted {
                let rk = rank[r as usize];
                if let Some(prev) = last {
                    if rank[prev as usize] != rk {
                        let t = split_threshold(self.x.get(prev as usize, j), self.x.get(r as usize, j));
                        consider(wl + wm, pl + pm, t, true);
                        consider(wl, pl, t, false);
                    }
                }
                let wi = self.weights[r as usize];
                wl += wi;
                pl += wi * f64::from(self.y[r as usize]);
                last = Some(r);
            }
            if last.is_some() && wm > 0.0 {
                consider(wl, pl, f64::MAX, false);
            }
        }
        best
    }

    fn build(&self, rows: Vec<u32>, r: &mut rng::Rng) -> CartTree {
        let mut nodes = vec![CartNode::Leaf { p: 0.0, weight: 0.0 }];
        let mut stack = vec![(0usize, rows, 0usize)];
        let n_cols = self.x.n_cols;
        while let Some((at, rows, depth)) = stack.pop() {
            let (w, pos) = self.totals(&rows);
            let leaf = CartNode::Leaf {
                p: if w > 0.0 { pos / w } else { 0.5 },
                weight: w,
            };
            let splittable = w >= self.params.min_samples_split as f64
                && pos > 0.0
                && pos < w
                && self.params.max_depth.is_none_or(|d| depth < d);
            if !splittable {
                nodes[at] = leaf;
                continue;
            }
            let features: Vec<usize> = if self.n_candidates >= n_cols {
                (0..n_cols).collect()
            } else {
                let mut f = index::sample(r, n_cols, self.n_candidates).into_vec();
                f.sort_unstable();
                f
            };
            let Some(s) = self.best_split(&rows, &features, w, pos) else {
                nodes[at] = leaf;
                continue;
            };
            let (left, right): (Vec<u32>, Vec<u32>) = rows
                .iter()
                .partition(|&&i| goes_left(self.x.get(i as usize, s.feature), s.threshold, s.miss_left));
            let l = nodes.len();
            nodes.push(CartNode::Leaf { p: 0.0, weight: 0.0 });
            nodes.push(CartNode::Leaf { p: 0.0, weight: 0.0 });
            nodes[at] = CartNode::Split {
                f: s.feature,
                t: s.threshold,
                miss_left: s.miss_left,
                l,
                r: l + 1,
                gain: s.gain,
            };
            // Right is pushed first so the left subtree is expanded first.
            stack.push((l + 1, right, depth + 1));
            stack.push((l, left, depth + 1));
        }
        CartTree { nodes }
    }
}

fn grow(data: &Dataset, ranks: &Ranks, weights: &[f64], params: &CartParams, r: &mut rng::Rng) -> CartTree {
    let rows: Vec<u32> = (0..data.len() as u32)
        .filter(|&i| weights[i as usize] > 0.0)
        .collect();
    Builder {
        x: &data.x,
        y: &data.y,
        weights,
        ranks,
        params,
        n_candidates: params.max_features.resolve(data.x.n_cols),
    }
    .build(rows, r)
}

pub fn train_tree(data: &Dataset, params: &CartParams, seed: u64) -> Result<CartTree> {
    params.validate()?;
    data.validate()?;
    let ranks = Ranks::new(&data.x);
    let weights = vec![1.0; data.len()];
    let mut r = rng::derive(seed, &[STREAM_FOREST, 0, 1]);
    Ok(grow(data, &ranks, &weights, params, &mut r))
}

/// Trees are grown in parallel; each draws its bootstrap sample and feature
/// subsets from its own stream.
pub fn train_forest(data: &Dataset, params: &ForestParams, seed: u64) -> Result<Forest> {
    params.tree.validate()?;
    data.validate()?;
    if params.n_trees == 0 {
        return Err(OdrError::Config("random forest needs at least one tree".into()));
    }
    let ranks = Ranks::new(&data.x);
    let n = data.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::derive(seed, &[STREAM_FOREST, t as u64]);
            let mut weights = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[r.random_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            let mut split_rng = rng::derive(seed, &[STREAM_FOREST, t as u64, 1]);
            grow(data, &ranks, &weights, &params.tree, &mut split_rng)
        })
        .collect();
    Ok(Forest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn noisy(seed: u64, n: usize) -> Dataset {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = r.random_range(0.0..1.0);
            let b: f64 = if r.random_bool(0.1) { f64::NAN } else { r.random_range(0.0..1.0) };
            let c = f64::from(r.random_range(0..4u8));
            y.push(u8::from(a + 0.3 * c / 3.0 + r.random_range(-0.3..0.3) > 0.6));
            rows.push(vec![a, b, c]);
        }
        Dataset::unnamed(Matrix::from_rows(&rows), y)
    }

    fn full() -> CartParams {
        CartParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }

    #[test]
    fn root_split_matches_gini_hand_calculation() {
        // x: 1 2 3 4, y: 0 0 1 1 -> threshold 2.5, parent 4 * 0.5 = 2.0.
        let data = Dataset::unnamed(
            Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]),
            vec![0, 0, 1, 1],
        );
        let t = train_tree(&data, &full(), 0).unwrap();
        match t.nodes[0] {
            CartNode::Split { f, t, gain, .. } => {
                assert_eq!((f, t), (0, 2.5));
                assert!((gain - 2.0).abs() < 1e-12);
            }
            ref other => panic!("{other:?}"),
        }
        assert_eq!(t.predict_row(&[0.0]), 0.0);
        assert_eq!(t.predict_row(&[9.0]), 1.0);
    }

    #[test]
    fn unlimited_tree_fits_distinct_points() {
        let data = noisy(1, 200);
        let t = train_tree(&data, &full(), 0).unwrap();
        for i in 0..data.len() {
            let p = t.predict_row(data.x.row(i));
            if data.x.row(i)[1].is_nan() {
                continue;
            }
            assert_eq!(p, f64::from(data.y[i]), "row {i}");
        }
    }

    #[test]
    fn single_unbootstrapped_tree_forest_equals_decision_tree() {
        let data = noisy(2, 300);
        let tree_params = CartParams {
            max_depth: Some(8),
            min_samples_split: 4,
            min_samples_leaf: 2,
            max_features: MaxFeatures::All,
        };
        let dt = train_tree(&data, &tree_params, 5).unwrap();
        let rf = train_forest(
            &data,
            &ForestParams {
                n_trees: 1,
                bootstrap: false,
                tree: tree_params,
            },
            9,
        )
        .unwrap();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let row = [r.random_range(-0.5..1.5), r.random_range(-0.5..1.5), f64::from(r.random_range(0..5u8))];
            assert_eq!(dt.predict_row(&row), rf.predict_row(&row));
        }
        assert_eq!(dt, rf.trees[0]);
    }

    #[test]
    fn limits_are_respected() {
        let data = noisy(3, 400);
        let params = CartParams {
            max_depth: Some(3),
            min_samples_split: 10,
            min_samples_leaf: 15,
            max_features: MaxFeatures::All,
        };
        let t = train_tree(&data, &params, 0).unwrap();
        fn depth(nodes: &[CartNode], at: usize) -> usize {
            match nodes[at] {
                CartNode::Leaf { .. } => 0,
                CartNode::Split { l, r, .. } => 1 + depth(nodes, l).max(depth(nodes, r)),
            }
        }
        assert!(depth(&t.nodes, 0) <= 3);
        for n in &t.nodes {
            if let CartNode::Leaf { weight, .. } = n {
                assert!(*weight >= 15.0);
            }
        }
    }

    #[test]
    fn forest_is_thread_count_independent() {
        let data = noisy(4, 300);
        let params = ForestParams {
            n_trees: 8,
            ..ForestParams::default()
        };
        let fit = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_forest(&data, &params, 1).unwrap())
        };
        assert_eq!(fit(1), fit(3));
    }
}
