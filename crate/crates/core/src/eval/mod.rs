//! Metrics, stratified cross-validation, randomized search, per-segment
//! models and feature ablations.

pub mod ablation;
pub mod metrics;
pub mod search;
pub mod segment;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DisputeCase;
use crate::error::{OdrError, Result};
use crate::features::FeatureSchema;
use crate::learners::{fit, Dataset, LearnerSpec};
use crate::pipeline::{labeled_cases, labels, prepare_split, stratified_folds, PipelineConfig, PreparedSplit};
use crate::rng;

pub use ablation::{ablate, ablate_prepared, ablation_units, AblationMode, AblationReport, AblationRow};
pub use metrics::{auroc, compute_metrics, roc_curve, round_to, trapezoid_auc, EvalReport, MeanMetrics, RocPoint, DEFAULT_THRESHOLD};
pub use search::{default_space, random_search, ParamDist, SearchReport, SearchSpace, SearchTrial};
pub use segment::{segment_evaluate, SegmentReport, SegmentRow};

const STREAM_CV: u64 = 0xc5;
const STREAM_FOLD_LEARNER: u64 = 0xc6;

/// Feature matrices for every fold of a stratified split, computed once and
/// reused by every learner and column subset evaluated on them.
#[derive(Debug, Clone)]
pub struct PreparedFolds {
    pub schema: FeatureSchema,
    pub splits: Vec<PreparedSplit>,
    pub seed: u64,
}

impl PreparedFolds {
    pub fn k(&self) -> usize {
        self.splits.len()
    }
}

pub fn prepare_folds(cases: &[&DisputeCase], schema: &FeatureSchema, k: usize, cfg: &PipelineConfig, seed: u64) -> Result<PreparedFolds> {
    let ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    let y = labels(cases);
    let folds = stratified_folds(&ids, &y, k, rng::derive_seed(seed, &[STREAM_CV]))?;
    let splits = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            prepare_split(cases, &train, &folds[f], schema, cfg, rng::derive_seed(seed, &[STREAM_CV, f as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedFolds {
        schema: schema.clone(),
        splits,
        seed,
    })
}

/// Prepares folds over the labeled cases of a corpus with a schema built
/// from the same corpus.
pub fn prepare_corpus_folds(corpus: &[DisputeCase], k: usize, cfg: &PipelineConfig, seed: u64) -> Result<PreparedFolds> {
    let schema = FeatureSchema::build(corpus, cfg.text.embedding_dim);
    schema.audit_sources()?;
    prepare_folds(&labeled_cases(corpus), &schema, k, cfg, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub learner: String,
    pub folds: Vec<EvalReport>,
    pub mean: MeanMetrics,
}

impl CvReport {
    pub fn fold_aurocs(&self) -> Vec<f64> {
        self.folds.iter().map(|r| r.auroc).collect()
    }
}

fn restrict(d: &Dataset, columns: &[usize], hash: &str) -> Dataset {
    Dataset::new(
        d.x.select_columns(columns),
        d.y.clone(),
        columns.iter().map(|&j| d.names[j].clone()).collect(),
        hash,
    )
}

/// Trains `spec` on each prepared fold, restricted to `columns` when given.
pub fn evaluate_folds(spec: &LearnerSpec, folds: &PreparedFolds, columns: Option<&[usize]>, seed: u64) -> Result<CvReport> {
    if let Some(cols) = columns {
        if cols.is_empty() {
            return Err(OdrError::InvalidInput("column subset is empty".into()));
        }
    }
    let hash = columns.map(|c| folds.schema.subset(c).hash);
    let reports = folds
        .splits
        .par_iter()
        .enumerate()
        .map(|(f, split)| {
            let (train, test) = match (columns, &hash) {
                (Some(c), Some(h)) => (restrict(&split.train, c, h), restrict(&split.test, c, h)),
                _ => (split.train.clone(), split.test.clone()),
            };
            let model = fit(spec, &train, rng::derive_seed(seed, &[STREAM_FOLD_LEARNER, f as u64]))?;
            let scores = model.predict(&test.schema_hash, &test.x)?;
            compute_metrics(&scores, &test.y, DEFAULT_THRESHOLD)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport {
        learner: spec.kind().to_string(),
        mean: MeanMetrics::of(&reports),
        folds: reports,
    })
}

/// Stratified k-fold cross-validation of the full pipeline; the text model
/// is refitted inside every fold on that fold's training rows.
pub fn cross_validate(spec: &LearnerSpec, corpus: &[DisputeCase], k: usize, cfg: &PipelineConfig, seed: u64) -> Result<CvReport> {
    let folds = prepare_corpus_folds(corpus, k, cfg, seed)?;
    evaluate_folds(spec, &folds, None, seed)
}

/// Held-out scores of every fold, concatenated in case order.
pub fn out_of_fold_scores(spec: &LearnerSpec, folds: &PreparedFolds, seed: u64) -> Result<Vec<(usize, f64)>> {
    let per_fold = folds
        .splits
        .par_iter()
        .enumerate()
        .map(|(f, split)| {
            let model = fit(spec, &split.train, rng::derive_seed(seed, &[STREAM_FOLD_LEARNER, f as u64]))?;
            let scores = model.predict(&split.test.schema_hash, &split.test.x)?;
            Ok(split.test_rows.iter().copied().zip(scores).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all: Vec<(usize, f64)> = per_fold.into_iter().flatten().collect();
    all.sort_by_key(|&(i, _)| i);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::GbdtParams;
    use crate::synth::{generate_corpus, GeneratorConfig};
    use crate::text::TextHyper;

    fn cfg() -> PipelineConfig {
        PipelineConfig {
            text: TextHyper {
                embedding_dim: 8,
                bucket_count: 1 << 12,
                epochs: 2,
                ..TextHyper::default()
            },
            text_folds: 3,
        }
    }

    #[test]
    fn duplicated_half_corpus_gives_identical_fold_reports() {
        let (base, _) = generate_corpus(&GeneratorConfig {
            n_cases: 200,
            seed: 3,
            ..GeneratorConfig::default()
        })
        .unwrap();
        // A Majority model on two folds of a corpus whose classes split
        // evenly sees the same prior in both folds.
        let spec = LearnerSpec::Majority;
        let mut corpus = base.clone();
        for c in &base {
            let mut d = c.clone();
            d.case_id = format!("{}-dup", c.case_id);
            corpus.push(d);
        }
        let rep = cross_validate(&spec, &corpus, 2, &cfg(), 0).unwrap();
        assert_eq!(rep.folds[0].positives, rep.folds[1].positives);
        assert_eq!(rep.folds[0].auroc, rep.folds[1].auroc);
        assert_eq!(rep.folds[0].accuracy, rep.folds[1].accuracy);
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let (corpus, _) = generate_corpus(&GeneratorConfig {
            n_cases: 300,
            seed: 4,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let spec = LearnerSpec::Gbdt(GbdtParams {
            n_trees: 10,
            ..GbdtParams::default()
        });
        let a = cross_validate(&spec, &corpus, 3, &cfg(), 9).unwrap();
        let b = cross_validate(&spec, &corpus, 3, &cfg(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.folds.len(), 3);
        let sizes: Vec<usize> = a.folds.iter().map(|r| r.n).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(a.mean.auroc > 0.6);
    }

    #[test]
    fn too_small_corpus_is_rejected() {
        let (corpus, _) = generate_corpus(&GeneratorConfig {
            n_cases: 4,
            seed: 4,
            ..GeneratorConfig::default()
        })
        .unwrap();
        assert!(cross_validate(&LearnerSpec::Majority, &corpus, 5, &cfg(), 0).is_err());
    }
}
