//! Baseline learners: majority vote, Gaussian naive Bayes, k-nearest
//! neighbors, and wrappers for the CART tree, forest and network.

use serde::{Deserialize, Serialize};

use super::cart::{train_forest, train_tree, CartTree, Forest};
use super::mlp::{train_mlp, MlpModel};
use super::{Dataset, LearnerSpec};
use crate::error::{OdrError, Result};
use crate::features::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbParams {
    /// Variances are floored at this fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams { var_smoothing: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
    pub weights: KnnWeights,
    pub metric: Metric,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: 7,
            weights: KnnWeights::Distance,
            metric: Metric::Euclidean,
        }
    }
}

/// Column means and scales fitted on training rows; missing values map to
/// the mean (zero after scaling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let mut mean = vec![0.0; x.n_cols];
        let mut scale = vec![1.0; x.n_cols];
        for j in 0..x.n_cols {
            let vals: Vec<f64> = x.column(j).into_iter().filter(|v| !v.is_nan()).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
            mean[j] = m;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Standardizer { mean, scale }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(row.iter().enumerate().map(|(j, &v)| {
            if v.is_nan() {
                0.0
            } else {
                (v - self.mean[j]) / self.scale[j]
            }
        }));
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut data = Vec::with_capacity(x.data.len());
        let mut buf = Vec::with_capacity(x.n_cols);
        for i in 0..x.n_rows {
            self.transform_row(x.row(i), &mut buf);
            data.extend_from_slice(&buf);
        }
        Matrix::new(x.n_rows, x.n_cols, data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    /// Class priors, index 0 = BuyerWins, 1 = SellerWins.
    pub prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl NbModel {
    pub fn fit(data: &Dataset, params: &NbParams) -> Result<NbModel> {
        let x = &data.x;
        let d = x.n_cols;
        let global_max_var = (0..d)
            .map(|j| {
                let vals: Vec<f64> = x.column(j).into_iter().filter(|v| !v.is_nan()).collect();
                population_var(&vals)
            })
            .fold(0.0, f64::max);
        let mut floor = params.var_smoothing * global_max_var;
        if floor <= 0.0 {
            floor = params.var_smoothing.max(f64::MIN_POSITIVE);
        }
        let mut mean = [vec![0.0; d], vec![0.0; d]];
        let mut var = [vec![floor; d], vec![floor; d]];
        let n = data.len() as f64;
        let pos = data.positives() as f64;
        for c in 0..2u8 {
            for j in 0..d {
                let vals: Vec<f64> = (0..x.n_rows)
                    .filter(|&i| data.y[i] == c)
                    .map(|i| x.get(i, j))
                    .filter(|v| !v.is_nan())
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                mean[c as usize][j] = m;
                var[c as usize][j] = population_var(&vals).max(floor);
            }
        }
        Ok(NbModel {
            prior: [(n - pos) / n, pos / n],
            mean,
            var,
        })
    }

    fn log_joint(&self, c: usize, row: &[f64]) -> f64 {
        let mut s = self.prior[c].ln();
        for (j, &v) in row.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            let var = self.var[c][j];
            let diff = v - self.mean[c][j];
            s -= 0.5 * (2.0 * std::f64::consts::PI * var).ln() + diff * diff / (2.0 * var);
        }
        s
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        super::sigmoid(self.log_joint(1, row) - self.log_joint(0, row))
    }
}

fn population_var(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub scaler: Standardizer,
    /// Standardized training rows.
    pub train: Matrix,
    pub labels: Vec<u8>,
}

impl KnnModel {
    pub fn fit(data: &Dataset, params: &KnnParams) -> Result<KnnModel> {
        if params.k == 0 || params.k > data.len() {
            return Err(OdrError::Config(format!(
                "knn: k = {} must be in 1..={}",
                params.k,
                data.len()
            )));
        }
        let scaler = Standardizer::fit(&data.x);
        Ok(KnnModel {
            params: params.clone(),
            train: scaler.transform(&data.x),
            scaler,
            labels: data.y.clone(),
        })
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.params.metric {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }

    /// Weighted share of positive labels among the `k` nearest rows; ties
    /// in distance go to the lower training index.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut q = Vec::with_capacity(row.len());
        self.scaler.transform_row(row, &mut q);
        let mut d: Vec<(f64, usize)> = (0..self.train.n_rows)
            .map(|i| (self.distance(&q, self.train.row(i)), i))
            .collect();
        let k = self.params.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        let nearest = &mut d[..k];
        nearest.sort_by(cmp);
        let label = |i: usize| f64::from(self.labels[i]);
        match self.params.weights {
            KnnWeights::Uniform => nearest.iter().map(|&(_, i)| label(i)).sum::<f64>() / k as f64,
            KnnWeights::Distance => {
                let exact: Vec<usize> = nearest.iter().filter(|n| n.0 == 0.0).map(|n| n.1).collect();
                if !exact.is_empty() {
                    return exact.iter().map(|&i| label(i)).sum::<f64>() / exact.len() as f64;
                }
                let (num, den) = nearest.iter().fold((0.0, 0.0), |(num, den), &(dist, i)| {
                    (num + label(i) / dist, den + 1.0 / dist)
                });
                num / den
            }
        }
    }
}

/// Parameters of a fitted baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Baseline {
    Majority { prior: f64 },
    GaussianNb(NbModel),
    Knn(KnnModel),
    DecisionTree { tree: CartTree },
    RandomForest(Forest),
    Mlp(MlpModel),
}

impl Baseline {
    pub fn kind(&self) -> &'static str {
        match self {
            Baseline::Majority { .. } => "majority",
            Baseline::GaussianNb(_) => "gaussian_nb",
            Baseline::Knn(_) => "knn",
            Baseline::DecisionTree { .. } => "decision_tree",
            Baseline::RandomForest(_) => "random_forest",
            Baseline::Mlp(_) => "mlp",
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Baseline::Majority { prior } => *prior,
            Baseline::GaussianNb(m) => m.predict_row(row),
            Baseline::Knn(m) => m.predict_row(row),
            Baseline::DecisionTree { tree } => tree.predict_row(row),
            Baseline::RandomForest(f) => f.predict_row(row),
            Baseline::Mlp(m) => m.predict_row(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub schema_hash: String,
    pub n_features: usize,
    pub seed: u64,
    pub variant: Baseline,
}

pub fn train_baseline(spec: &LearnerSpec, data: &Dataset, seed: u64) -> Result<BaselineModel> {
    data.validate()?;
    let variant = match spec {
        LearnerSpec::Majority => Baseline::Majority {
            prior: data.positives() as f64 / data.len() as f64,
        },
        LearnerSpec::GaussianNb(p) => Baseline::GaussianNb(NbModel::fit(data, p)?),
        LearnerSpec::Knn(p) => Baseline::Knn(KnnModel::fit(data, p)?),
        LearnerSpec::DecisionTree(p) => Baseline::DecisionTree {
            tree: train_tree(data, p, seed)?,
        },
        LearnerSpec::RandomForest(p) => Baseline::RandomForest(train_forest(data, p, seed)?),
        LearnerSpec::Mlp(p) => Baseline::Mlp(train_mlp(data, p, seed)?),
        LearnerSpec::Gbdt(_) => {
            return Err(OdrError::Config("gbdt is not a baseline learner".into()));
        }
    };
    Ok(BaselineModel {
        schema_hash: data.schema_hash.clone(),
        n_features: data.x.n_cols,
        seed,
        variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn majority_predicts_the_prior_everywhere() {
        let y: Vec<u8> = (0..1000).map(|i| u8::from(i < 596)).collect();
        let x = Matrix::new(1000, 1, (0..1000).map(f64::from).collect());
        let m = train_baseline(&LearnerSpec::Majority, &Dataset::unnamed(x, y), 0).unwrap();
        assert_eq!(m.variant.predict_row(&[3.0]), 0.596);
        assert_eq!(m.variant.predict_row(&[f64::NAN]), 0.596);
    }

    #[test]
    fn naive_bayes_boundary_sits_at_the_midpoint() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 1.0).unwrap();
        // Mirror-image samples give exactly equal variances and priors.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..500 {
            let e: f64 = noise.sample(&mut r);
            rows.push(vec![-2.0 + e]);
            y.push(0);
            rows.push(vec![2.0 - e]);
            y.push(1);
        }
        let data = Dataset::unnamed(Matrix::from_rows(&rows), y);
        let m = NbModel::fit(&data, &NbParams::default()).unwrap();
        assert!((m.predict_row(&[0.0]) - 0.5).abs() < 1e-9);
        assert!(m.predict_row(&[0.1]) > 0.5);
        assert!(m.predict_row(&[-0.1]) < 0.5);
    }

    #[test]
    fn naive_bayes_floors_constant_features() {
        let data = Dataset::unnamed(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]),
            vec![0, 0, 1, 1],
        );
        let m = NbModel::fit(&data, &NbParams::default()).unwrap();
        assert!(m.var.iter().flatten().all(|&v| v > 0.0));
        let p = m.predict_row(&[1.0, 2.5]);
        assert!(p.is_finite() && p > 0.5);
    }

    #[test]
    fn one_neighbor_memorizes_distinct_points() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| vec![r.random(), r.random()]).collect();
        let y: Vec<u8> = (0..100).map(|_| u8::from(r.random_bool(0.5))).collect();
        let data = Dataset::unnamed(Matrix::from_rows(&rows), y.clone());
        for metric in [Metric::Euclidean, Metric::Manhattan] {
            for weights in [KnnWeights::Uniform, KnnWeights::Distance] {
                let m = KnnModel::fit(&data, &KnnParams { k: 1, weights, metric }).unwrap();
                for (i, row) in rows.iter().enumerate() {
                    assert_eq!(m.predict_row(row), f64::from(y[i]));
                }
            }
        }
    }

    #[test]
    fn knn_rejects_k_above_n() {
        let data = Dataset::unnamed(Matrix::from_rows(&[vec![0.0], vec![1.0]]), vec![0, 1]);
        let err = KnnModel::fit(&data, &KnnParams { k: 3, ..KnnParams::default() });
        assert!(matches!(err, Err(OdrError::Config(_))));
    }

    #[test]
    fn knn_distance_weighting_hand_example() {
        // Standardized training points at -1 and 1; query at 0.5 is 1.5 from
        // the negative and 0.5 from the positive.
        let data = Dataset::unnamed(Matrix::from_rows(&[vec![0.0], vec![2.0]]), vec![0, 1]);
        let m = KnnModel::fit(
            &data,
            &KnnParams {
                k: 2,
                weights: KnnWeights::Distance,
                metric: Metric::Euclidean,
            },
        )
        .unwrap();
        let p = m.predict_row(&[1.5]);
        assert!((p - (1.0 / 0.5) / (1.0 / 0.5 + 1.0 / 1.5)).abs() < 1e-12);
    }
}
