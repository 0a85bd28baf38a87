//! Classifiers sharing one train/predict contract: a gradient-boosted tree
//! ensemble plus majority, Gaussian naive Bayes, k-nearest-neighbors, CART
//! decision tree, random forest and a small feedforward network.
//!
//! All learners predict the probability of [`OutcomeLabel::SellerWins`]
//! (label `1`).
//!
//! [`OutcomeLabel::SellerWins`]: crate::domain::OutcomeLabel::SellerWins

pub mod baseline;
pub mod cart;
pub mod file;
pub mod gbdt;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{OdrError, Result};
use crate::features::Matrix;

pub use baseline::{Baseline, BaselineModel, KnnModel, KnnParams, KnnWeights, Metric, NbModel, NbParams};
pub use cart::{CartNode, CartParams, CartTree, Forest, ForestParams, MaxFeatures};
pub use file::{load_model, save_model, ModelFile, ModelMetadata, MODEL_FORMAT_VERSION};
pub use gbdt::{train_gbdt, GbdtParams, Tree, TreeEnsembleModel, TreeNode};
pub use mlp::{Activation, MlpModel, MlpParams, Solver};

/// Training matrix with binary labels and the column names used in errors.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub names: Vec<String>,
    pub schema_hash: String,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<u8>, names: Vec<String>, schema_hash: impl Into<String>) -> Self {
        Dataset {
            x,
            y,
            names,
            schema_hash: schema_hash.into(),
        }
    }

    /// Columns named `x0, x1, ...` under an ad-hoc schema hash.
    pub fn unnamed(x: Matrix, y: Vec<u8>) -> Self {
        let names = (0..x.n_cols).map(|j| format!("x{j}")).collect();
        Dataset::new(x, y, names, "adhoc")
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    /// Shape, label domain, both classes present, no infinities.
    pub fn validate(&self) -> Result<()> {
        if self.x.n_rows != self.y.len() {
            return Err(OdrError::InvalidInput(format!(
                "{} feature rows but {} labels",
                self.x.n_rows,
                self.y.len()
            )));
        }
        if self.names.len() != self.x.n_cols {
            return Err(OdrError::InvalidInput(format!(
                "{} column names for {} columns",
                self.names.len(),
                self.x.n_cols
            )));
        }
        if self.y.iter().any(|&v| v > 1) {
            return Err(OdrError::InvalidInput("labels must be 0 or 1".into()));
        }
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(OdrError::SingleClass);
        }
        self.x.check_finite(&self.names)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
            schema_hash: self.schema_hash.clone(),
        }
    }
}

pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

pub fn log_odds(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Logistic loss of a margin against a 0/1 label, stable for large |margin|.
pub fn logistic_loss(margin: f64, y: u8) -> f64 {
    let softplus = margin.max(0.0) + (-margin.abs()).exp().ln_1p();
    softplus - f64::from(y) * margin
}

/// First and second derivative of [`logistic_loss`] in the margin.
pub fn logistic_grad_hess(margin: f64, y: u8) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - f64::from(y), p * (1.0 - p))
}

/// Mean logistic loss of probabilities, clipped away from 0 and 1.
pub fn mean_log_loss(probs: &[f64], y: &[u8]) -> f64 {
    let eps = 1e-15;
    let total: f64 = probs
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(eps, 1.0 - eps);
            if t == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len().max(1) as f64
}

/// Which learner to train, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", content = "params", rename_all = "snake_case")]
pub enum LearnerSpec {
    Gbdt(GbdtParams),
    Majority,
    GaussianNb(NbParams),
    Knn(KnnParams),
    DecisionTree(CartParams),
    RandomForest(ForestParams),
    Mlp(MlpParams),
}

impl LearnerSpec {
    /// Short name used in reports and model files.
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerSpec::Gbdt(_) => "gbdt",
            LearnerSpec::Majority => "majority",
            LearnerSpec::GaussianNb(_) => "gaussian_nb",
            LearnerSpec::Knn(_) => "knn",
            LearnerSpec::DecisionTree(_) => "decision_tree",
            LearnerSpec::RandomForest(_) => "random_forest",
            LearnerSpec::Mlp(_) => "mlp",
        }
    }

    /// Default hyperparameters for a learner kind.
    pub fn default_for(kind: &str) -> Result<LearnerSpec> {
        Ok(match kind {
            "gbdt" => LearnerSpec::Gbdt(GbdtParams::default()),
            "majority" => LearnerSpec::Majority,
            "gaussian_nb" | "nb" => LearnerSpec::GaussianNb(NbParams::default()),
            "knn" => LearnerSpec::Knn(KnnParams::default()),
            "decision_tree" | "dt" => LearnerSpec::DecisionTree(CartParams::default()),
            "random_forest" | "rf" => LearnerSpec::RandomForest(ForestParams::default()),
            "mlp" => LearnerSpec::Mlp(MlpParams::default()),
            other => return Err(OdrError::Config(format!("unknown learner `{other}`"))),
        })
    }

    /// All seven learners with default hyperparameters, in report order.
    pub fn all_defaults() -> Vec<LearnerSpec> {
        ["majority", "knn", "mlp", "gaussian_nb", "decision_tree", "random_forest", "gbdt"]
            .iter()
            .map(|k| LearnerSpec::default_for(k).expect("known learner"))
            .collect()
    }
}

/// A trained classifier of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gbdt(TreeEnsembleModel),
    Baseline(BaselineModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Gbdt(_) => "gbdt",
            Model::Baseline(b) => b.variant.kind(),
        }
    }

    pub fn schema_hash(&self) -> &str {
        match self {
            Model::Gbdt(m) => &m.schema_hash,
            Model::Baseline(b) => &b.schema_hash,
        }
    }

    /// Probability of `SellerWins` for one feature row. No schema check.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Gbdt(m) => m.predict_proba(row),
            Model::Baseline(b) => b.variant.predict_row(row),
        }
    }

    /// Probabilities for every row after checking the schema hash.
    pub fn predict(&self, schema_hash: &str, x: &Matrix) -> Result<Vec<f64>> {
        if schema_hash != self.schema_hash() {
            return Err(OdrError::SchemaMismatch {
                expected: self.schema_hash().to_string(),
                found: schema_hash.to_string(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub fn predict_unchecked(&self, x: &Matrix) -> Vec<f64> {
        use rayon::prelude::*;
        (0..x.n_rows)
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect()
    }
}

/// Train any learner on a validated dataset.
pub fn fit(spec: &LearnerSpec, data: &Dataset, seed: u64) -> Result<Model> {
    match spec {
        LearnerSpec::Gbdt(p) => train_gbdt(data, p, seed).map(Model::Gbdt),
        other => baseline::train_baseline(other, data, seed).map(Model::Baseline),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn logistic_derivatives_match_finite_differences() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let e = 1e-3;
        for _ in 0..20 {
            let m: f64 = r.random_range(-6.0..6.0);
            for y in [0u8, 1] {
                let (g, h) = logistic_grad_hess(m, y);
                let fd_g = (logistic_loss(m + e, y) - logistic_loss(m - e, y)) / (2.0 * e);
                let fd_h = (logistic_loss(m + e, y) - 2.0 * logistic_loss(m, y)
                    + logistic_loss(m - e, y))
                    / (e * e);
                assert!((g - fd_g).abs() <= 1e-6, "g at {m}: {g} vs {fd_g}");
                assert!((h - fd_h).abs() <= 1e-6, "h at {m}: {h} vs {fd_h}");
            }
        }
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((log_odds(sigmoid(1.3)) - 1.3).abs() < 1e-12);
        assert!(logistic_loss(800.0, 1).abs() < 1e-12);
        assert!((logistic_loss(-800.0, 1) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn validation_rejects_single_class_and_infinity() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 2.0]]);
        let d = Dataset::unnamed(x.clone(), vec![1, 1]);
        assert!(matches!(d.validate(), Err(OdrError::SingleClass)));
        let mut bad = Dataset::unnamed(x, vec![0, 1]);
        bad.x.data[3] = f64::INFINITY;
        match bad.validate() {
            Err(OdrError::NonFinite { column }) => assert_eq!(column, "x1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn learner_spec_json_shape() {
        let s = serde_json::to_string(&LearnerSpec::Majority).unwrap();
        assert_eq!(s, r#"{"learner":"majority"}"#);
        for spec in LearnerSpec::all_defaults() {
            let json = serde_json::to_string(&spec).unwrap();
            let back: LearnerSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec);
        }
    }
}
