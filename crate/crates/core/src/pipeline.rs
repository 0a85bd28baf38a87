//! Corpus-to-model plumbing shared by training, evaluation and serving.
//!
//! The text classifier's output is itself a feature. To keep the tabular
//! learner from trusting text predictions made on documents the text model
//! was trained on, training rows get out-of-fold text features: the training
//! set is split into folds and each fold is scored by a text model fitted on
//! the others. Rows scored at prediction time use one text model fitted on
//! the whole training set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DisputeCase, OutcomeLabel};
use crate::error::{OdrError, Result};
use crate::features::{assemble, FeatureSchema, FeatureVector, Matrix};
use crate::learners::{fit, Dataset, LearnerSpec, Model, ModelFile, ModelMetadata};
use crate::rng;
use crate::text::{
    conversation_stream, predict_text, train_text_model, LabeledDocument, TextFeatures, TextHyper,
    TextModel,
};

const STREAM_TEXT: u64 = 0x7e70;
const STREAM_TEXT_FOLDS: u64 = 0x7e71;
const STREAM_FOLDS: u64 = 0xf01d;
const STREAM_LEARNER: u64 = 0x1ea7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub text: TextHyper,
    /// Folds used to produce out-of-fold text features for training rows.
    pub text_folds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            text: TextHyper::default(),
            text_folds: 5,
        }
    }
}

/// Cases with a known outcome, in corpus order.
pub fn labeled_cases(corpus: &[DisputeCase]) -> Vec<&DisputeCase> {
    corpus.iter().filter(|c| c.outcome.is_some()).collect()
}

pub fn labels(cases: &[&DisputeCase]) -> Vec<u8> {
    cases.iter().map(|c| c.label().unwrap_or(0)).collect()
}

fn document(case: &DisputeCase) -> LabeledDocument {
    LabeledDocument {
        id: case.case_id.clone(),
        tokens: conversation_stream(&case.conversation),
        label: case.label().unwrap_or(0),
    }
}

/// Stratified `k`-fold assignment. Membership depends only on the ids,
/// labels and seed: rows are ordered by id, each class is shuffled, and the
/// concatenated classes are dealt round-robin. Fold sizes and per-fold class
/// counts differ by at most one.
pub fn stratified_folds(ids: &[&str], labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    if k < 2 {
        return Err(OdrError::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[usize::from(y.min(1))].push(i);
    }
    for (c, rows) in by_class.iter_mut().enumerate() {
        if rows.len() < k {
            return Err(OdrError::InvalidInput(format!(
                "class {c} has {} rows, fewer than {k} folds",
                rows.len()
            )));
        }
        rows.sort_by(|&a, &b| ids[a].cmp(ids[b]).then(a.cmp(&b)));
        rows.shuffle(&mut rng::derive(seed, &[STREAM_FOLDS, c as u64]));
    }
    let mut folds = vec![Vec::new(); k];
    for (n, &i) in by_class[0].iter().chain(&by_class[1]).enumerate() {
        folds[n % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn text_hyper(base: &TextHyper, seed: u64, path: &[u64]) -> TextHyper {
    TextHyper {
        seed: rng::derive_seed(seed ^ base.seed, path),
        ..base.clone()
    }
}

/// Text model fitted on all of `cases`.
pub fn fit_text_model(cases: &[&DisputeCase], cfg: &PipelineConfig, seed: u64) -> Result<TextModel> {
    let docs: Vec<LabeledDocument> = cases.iter().map(|c| document(c)).collect();
    train_text_model(&docs, &text_hyper(&cfg.text, seed, &[STREAM_TEXT]))
}

/// Out-of-fold text features for every case.
pub fn cross_fitted_text(cases: &[&DisputeCase], cfg: &PipelineConfig, seed: u64) -> Result<Vec<TextFeatures>> {
    let ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    let y = labels(cases);
    let folds = stratified_folds(&ids, &y, cfg.text_folds, rng::derive_seed(seed, &[STREAM_TEXT_FOLDS]))?;
    let docs: Vec<LabeledDocument> = cases.par_iter().map(|c| document(c)).collect();
    let per_fold: Vec<Vec<(usize, TextFeatures)>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, held_out)| {
            let mut is_held = vec![false; cases.len()];
            held_out.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<LabeledDocument> = docs
                .iter()
                .zip(&is_held)
                .filter(|(_, &h)| !h)
                .map(|(d, _)| d.clone())
                .collect();
            let model = train_text_model(&train, &text_hyper(&cfg.text, seed, &[STREAM_TEXT_FOLDS, f as u64]))?;
            Ok(held_out
                .iter()
                .map(|&i| (i, model.predict_tokens(&docs[i].tokens)))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Option<TextFeatures>> = vec![None; cases.len()];
    for (i, t) in per_fold.into_iter().flatten() {
        out[i] = Some(t);
    }
    Ok(out.into_iter().map(|t| t.expect("every row is held out once")).collect())
}

pub fn feature_matrix(cases: &[&DisputeCase], texts: &[TextFeatures], schema: &FeatureSchema) -> Matrix {
    let rows: Vec<Vec<f64>> = cases
        .par_iter()
        .zip(texts)
        .map(|(c, t)| assemble(c, t, schema, None).values)
        .collect();
    let mut data = Vec::with_capacity(rows.len() * schema.len());
    rows.iter().for_each(|r| data.extend_from_slice(r));
    Matrix::new(rows.len(), schema.len(), data)
}

/// Training and held-out matrices for one split, with all schema columns.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// Positions of the held-out rows in the case list the split came from.
    pub test_rows: Vec<usize>,
}

pub fn prepare_split(
    cases: &[&DisputeCase],
    train_rows: &[usize],
    test_rows: &[usize],
    schema: &FeatureSchema,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PreparedSplit> {
    let train_cases: Vec<&DisputeCase> = train_rows.iter().map(|&i| cases[i]).collect();
    let test_cases: Vec<&DisputeCase> = test_rows.iter().map(|&i| cases[i]).collect();
    let train_text = cross_fitted_text(&train_cases, cfg, seed)?;
    let text_model = fit_text_model(&train_cases, cfg, seed)?;
    let test_text: Vec<TextFeatures> = test_cases
        .par_iter()
        .map(|c| predict_text(&text_model, &c.conversation))
        .collect();
    let dataset = |cs: &[&DisputeCase], ts: &[TextFeatures]| {
        Dataset::new(feature_matrix(cs, ts, schema), labels(cs), schema.names(), schema.hash.clone())
    };
    Ok(PreparedSplit {
        train: dataset(&train_cases, &train_text),
        test: dataset(&test_cases, &test_text),
        test_rows: test_rows.to_vec(),
    })
}

/// Seed handed to a learner trained under a pipeline seed.
pub fn learner_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, &[STREAM_LEARNER])
}

/// Prediction for one case with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasePrediction {
    pub p_seller_wins: f64,
    pub predicted: OutcomeLabel,
    pub text: TextFeatures,
    pub features: FeatureVector,
}

/// Schema, text model and classifier trained together on one corpus.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub schema: FeatureSchema,
    pub text_model: TextModel,
    pub model: Model,
    pub spec: LearnerSpec,
    pub seed: u64,
    pub n_train: usize,
    pub train_positive_rate: f64,
}

pub fn train_pipeline(
    corpus: &[DisputeCase],
    spec: &LearnerSpec,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<TrainedPipeline> {
    let cases = labeled_cases(corpus);
    let schema = FeatureSchema::build(corpus, cfg.text.embedding_dim);
    schema.audit_sources()?;
    let texts = cross_fitted_text(&cases, cfg, seed)?;
    let text_model = fit_text_model(&cases, cfg, seed)?;
    let data = Dataset::new(
        feature_matrix(&cases, &texts, &schema),
        labels(&cases),
        schema.names(),
        schema.hash.clone(),
    );
    let model = fit(spec, &data, learner_seed(seed))?;
    Ok(TrainedPipeline {
        n_train: data.len(),
        train_positive_rate: data.positives() as f64 / data.len() as f64,
        schema,
        text_model,
        model,
        spec: spec.clone(),
        seed,
    })
}

impl TrainedPipeline {
    pub fn features(&self, case: &DisputeCase) -> (FeatureVector, TextFeatures) {
        let text = predict_text(&self.text_model, &case.conversation);
        (assemble(case, &text, &self.schema, None), text)
    }

    pub fn predict_case(&self, case: &DisputeCase) -> CasePrediction {
        let (features, text) = self.features(case);
        let p = self.model.predict_row(&features.values);
        CasePrediction {
            p_seller_wins: p,
            predicted: if p >= 0.5 {
                OutcomeLabel::SellerWins
            } else {
                OutcomeLabel::BuyerWins
            },
            text,
            features,
        }
    }

    pub fn to_model_file(&self) -> Result<ModelFile> {
        ModelFile::new(
            &self.model,
            Some(&self.text_model),
            ModelMetadata {
                model_version: String::new(),
                learner: self.spec.clone(),
                seed: self.seed,
                schema: self.schema.clone(),
                n_train: self.n_train,
                train_positive_rate: self.train_positive_rate,
                extra: Default::default(),
            },
        )
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        let text_model = file
            .text_model()?
            .ok_or_else(|| OdrError::Model("model file has no text model".into()))?;
        Ok(TrainedPipeline {
            schema: file.schema().clone(),
            text_model,
            model: file.model()?,
            spec: file.metadata.learner.clone(),
            seed: file.metadata.seed,
            n_train: file.metadata.n_train,
            train_positive_rate: file.metadata.train_positive_rate,
        })
    }
}
