//! Monte-Carlo Shapley values by permutation sampling.
//!
//! Each sample draws a feature order and a background row, starts from the
//! background row and reveals the explained row's values one feature at a
//! time; every feature is credited with the change in model output when it
//! is revealed. Background rows are visited in a shuffled cycle so every row
//! is used equally often.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OdrError, Result};
use crate::features::Matrix;
use crate::rng;

const STREAM_PERMUTATION: u64 = 0x5a1;
const STREAM_BACKGROUND: u64 = 0x5a2;
const BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    pub phi: Vec<f64>,
    /// Standard error of each `phi`.
    pub se: Vec<f64>,
    /// Model output at the explained row.
    pub prediction: f64,
    /// Mean model output over the whole background sample.
    pub expected: f64,
    pub sample_count: usize,
    /// `Σ phi − (prediction − expected)`.
    pub efficiency_gap: f64,
    /// Standard error of `Σ phi`.
    pub efficiency_se: f64,
}

impl ShapleyValues {
    /// Whether the efficiency gap lies within `k` standard errors.
    pub fn efficient_within(&self, k: f64) -> bool {
        self.efficiency_gap.abs() <= k * self.efficiency_se + 1e-12
    }
}

/// Running first and second moments of per-sample credits.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    total: f64,
    total_sq: f64,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            total: 0.0,
            total_sq: 0.0,
        }
    }

    fn merge(mut self, other: Moments) -> Moments {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.total += other.total;
        self.total_sq += other.total_sq;
        self
    }
}

fn standard_error(sum: f64, sum_sq: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n = n as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

/// Estimates Shapley values of `f` at `x` against `background`, with
/// `n_permutations` sampled feature orders. Deterministic for a seed and
/// independent of the thread count.
pub fn shapley_estimate<F>(f: &F, x: &[f64], background: &Matrix, n_permutations: usize, seed: u64) -> Result<ShapleyValues>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_permutations == 0 {
        return Err(OdrError::Config("n_permutations must be positive".into()));
    }
    if background.n_rows == 0 {
        return Err(OdrError::InvalidInput("background sample is empty".into()));
    }
    let d = x.len();
    if background.n_cols != d {
        return Err(OdrError::InvalidInput(format!(
            "background has {} columns, row has {d}",
            background.n_cols
        )));
    }
    let background_scores: Vec<f64> = (0..background.n_rows)
        .into_par_iter()
        .map(|i| f(background.row(i)))
        .collect();
    let expected = background_scores.iter().sum::<f64>() / background.n_rows as f64;
    let prediction = f(x);
    let mut cycle: Vec<usize> = (0..background.n_rows).collect();
    cycle.shuffle(&mut rng::derive(seed, &[STREAM_BACKGROUND]));

    let blocks: Vec<usize> = (0..n_permutations.div_ceil(BLOCK)).collect();
    let moments = blocks
        .par_iter()
        .map(|&b| {
            let mut m = Moments::new(d);
            let mut order: Vec<usize> = (0..d).collect();
            let mut z = vec![0.0; d];
            for s in b * BLOCK..((b + 1) * BLOCK).min(n_permutations) {
                order.sort_unstable();
                order.shuffle(&mut rng::derive(seed, &[STREAM_PERMUTATION, s as u64]));
                let bg = cycle[s % cycle.len()];
                z.copy_from_slice(background.row(bg));
                let mut prev = background_scores[bg];
                for &j in &order {
                    z[j] = x[j];
                    let cur = f(&z);
                    let credit = cur - prev;
                    m.sum[j] += credit;
                    m.sum_sq[j] += credit * credit;
                    prev = cur;
                }
                let total = prediction - background_scores[bg];
                m.total += total;
                m.total_sq += total * total;
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::new(d), Moments::merge);

    let n = n_permutations as f64;
    let phi: Vec<f64> = moments.sum.iter().map(|s| s / n).collect();
    let se = (0..d)
        .map(|j| standard_error(moments.sum[j], moments.sum_sq[j], n_permutations))
        .collect();
    Ok(ShapleyValues {
        efficiency_gap: phi.iter().sum::<f64>() - (prediction - expected),
        efficiency_se: standard_error(moments.total, moments.total_sq, n_permutations),
        phi,
        se,
        prediction,
        expected,
        sample_count: n_permutations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyInstance {
    pub id: String,
    /// Feature values of the explained row; `None` for missing.
    pub values: Vec<Option<f64>>,
    pub shapley: ShapleyValues,
}

/// Shapley values for several rows plus the features ranked by mean |phi|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleySummary {
    pub features: Vec<String>,
    pub instances: Vec<ShapleyInstance>,
    /// Feature indices by mean |phi|, largest first.
    pub order: Vec<usize>,
    pub mean_abs: Vec<f64>,
    pub sample_count: usize,
}

impl ShapleySummary {
    /// Long-format rows `(id, feature, value, phi, se)` for plotting.
    pub fn long_rows(&self) -> Vec<(String, String, Option<f64>, f64, f64)> {
        let mut out = Vec::new();
        for inst in &self.instances {
            for &j in &self.order {
                out.push((
                    inst.id.clone(),
                    self.features[j].clone(),
                    inst.values[j],
                    inst.shapley.phi[j],
                    inst.shapley.se[j],
                ));
            }
        }
        out
    }
}

/// Explains every `(id, row)` with a seed derived from `seed` and the id.
pub fn shapley_summary<F>(
    f: &F,
    rows: &[(String, Vec<f64>)],
    background: &Matrix,
    features: Vec<String>,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleySummary>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = features.len();
    let instances = rows
        .iter()
        .map(|(id, x)| {
            let shapley = shapley_estimate(f, x, background, n_permutations, rng::derive_seed(seed, &[rng::str_stream(id)]))?;
            Ok(ShapleyInstance {
                id: id.clone(),
                values: x.iter().map(|v| (!v.is_nan()).then_some(*v)).collect(),
                shapley,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean_abs = vec![0.0; d];
    for inst in &instances {
        for (m, p) in mean_abs.iter_mut().zip(&inst.shapley.phi) {
            *m += p.abs();
        }
    }
    let count = instances.len().max(1) as f64;
    mean_abs.iter_mut().for_each(|m| *m /= count);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    Ok(ShapleySummary {
        features,
        instances,
        order,
        mean_abs,
        sample_count: n_permutations,
    })
}
