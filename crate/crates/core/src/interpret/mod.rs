//! Explanations: gain importance, decision-path attribution, Monte-Carlo
//! Shapley values and token weights for the text classifier.

pub mod importance;
pub mod lime;
pub mod path;
pub mod shapley;

use serde::{Deserialize, Serialize};

pub use importance::{gain_importance, GainReport, GainRow};
pub use lime::{explain_text, explain_with_model, fit_surrogate, LimeConfig, TokenExplanation, TokenWeight};
pub use path::{path_attribution, PathAttribution, PathExplainer};
pub use shapley::{shapley_estimate, shapley_summary, ShapleyInstance, ShapleySummary, ShapleyValues};

use crate::domain::DisputeCase;
use crate::error::{OdrError, Result};
use crate::features::Matrix;
use crate::learners::Model;
use crate::pipeline::TrainedPipeline;
use crate::rng;
use crate::text::conversation_stream;

const STREAM_EXPLAIN: u64 = 0xe7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    /// `None` when the value is missing.
    pub value: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyContribution {
    pub feature: String,
    pub value: Option<f64>,
    pub phi: f64,
    pub se: f64,
}

/// Everything shown to an arbitrator for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseExplanation {
    pub case_id: String,
    pub p_seller_wins: f64,
    pub bias: f64,
    /// Largest decision-path contributions by magnitude.
    pub contributions: Vec<FeatureContribution>,
    pub tokens: Vec<TokenWeight>,
    /// The conversation had no known n-grams, so the text score is the prior.
    pub neutral_text: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapley: Option<Vec<ShapleyContribution>>,
}

#[derive(Debug, Clone)]
pub struct ExplainOptions {
    pub top_k: usize,
    pub lime: LimeConfig,
    /// Background rows and permutation count; Shapley values are skipped
    /// when absent.
    pub shapley: Option<(Matrix, usize)>,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            top_k: 10,
            lime: LimeConfig::default(),
            shapley: None,
        }
    }
}

fn present(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

/// Explains one case. Seeds derive from `seed` and the case id. Requires a
/// boosted-tree model.
pub fn explain_case(pipeline: &TrainedPipeline, case: &DisputeCase, opts: &ExplainOptions, seed: u64) -> Result<CaseExplanation> {
    let Model::Gbdt(ensemble) = &pipeline.model else {
        return Err(OdrError::InvalidInput(format!(
            "decision-path explanations need a gbdt model, found {}",
            pipeline.model.kind()
        )));
    };
    let case_seed = rng::derive_seed(seed, &[STREAM_EXPLAIN, rng::str_stream(&case.case_id)]);
    let (features, text) = pipeline.features(case);
    let row = &features.values;
    let attribution = path_attribution(ensemble, row)?;
    let names = pipeline.schema.names();
    let contributions = attribution
        .ranked()
        .into_iter()
        .take(opts.top_k)
        .map(|j| FeatureContribution {
            feature: names[j].clone(),
            value: present(row[j]),
            weight: attribution.contributions[j],
        })
        .collect();
    let tokens = match explain_with_model(&pipeline.text_model, &conversation_stream(&case.conversation), &opts.lime, case_seed) {
        Ok(e) => e.tokens,
        Err(OdrError::InvalidInput(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    let shapley = match &opts.shapley {
        None => None,
        Some((background, n)) => {
            let f = |z: &[f64]| ensemble.predict_proba(z);
            let s = shapley_estimate(&f, row, background, *n, case_seed)?;
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| s.phi[b].abs().total_cmp(&s.phi[a].abs()).then(a.cmp(&b)));
            Some(
                idx.into_iter()
                    .take(opts.top_k)
                    .map(|j| ShapleyContribution {
                        feature: names[j].clone(),
                        value: present(row[j]),
                        phi: s.phi[j],
                        se: s.se[j],
                    })
                    .collect(),
            )
        }
    };
    Ok(CaseExplanation {
        case_id: case.case_id.clone(),
        p_seller_wins: attribution.probability,
        bias: attribution.bias,
        contributions,
        tokens,
        neutral_text: text.neutral,
        shapley,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{GbdtParams, LearnerSpec};
    use crate::pipeline::{train_pipeline, PipelineConfig};
    use crate::synth::{generate_corpus, GeneratorConfig};
    use crate::text::TextHyper;

    #[test]
    fn case_explanation_payload() {
        let (corpus, _) = generate_corpus(&GeneratorConfig {
            n_cases: 300,
            seed: 11,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let cfg = PipelineConfig {
            text: TextHyper {
                embedding_dim: 6,
                bucket_count: 1 << 10,
                epochs: 2,
                ..TextHyper::default()
            },
            text_folds: 2,
        };
        let spec = LearnerSpec::Gbdt(GbdtParams {
            n_trees: 15,
            ..GbdtParams::default()
        });
        let p = train_pipeline(&corpus, &spec, &cfg, 3).unwrap();
        let rows: Vec<Vec<f64>> = corpus[..20].iter().map(|c| p.features(c).0.values).collect();
        let opts = ExplainOptions {
            lime: LimeConfig {
                n_samples: 200,
                ..LimeConfig::default()
            },
            shapley: Some((Matrix::from_rows(&rows), 50)),
            ..ExplainOptions::default()
        };
        let e = explain_case(&p, &corpus[0], &opts, 5).unwrap();
        assert_eq!(e.p_seller_wins, p.predict_case(&corpus[0]).p_seller_wins);
        assert!(e.contributions.len() <= 10);
        assert!(e.contributions.windows(2).all(|w| w[0].weight.abs() >= w[1].weight.abs()));
        assert_eq!(e.shapley.as_ref().unwrap().len(), 10);
        let json = serde_json::to_value(&e).unwrap();
        for key in ["case_id", "p_seller_wins", "bias", "contributions", "tokens", "shapley"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(explain_case(&p, &corpus[0], &opts, 5).unwrap(), e);
        assert!(!e.neutral_text);
        let mut silent = corpus[0].clone();
        silent.conversation.messages.clear();
        let quiet = explain_case(&p, &silent, &opts, 5).unwrap();
        assert!(quiet.neutral_text);
        assert!(quiet.tokens.is_empty());

        let nb = train_pipeline(&corpus, &LearnerSpec::default_for("nb").unwrap(), &cfg, 3).unwrap();
        assert!(explain_case(&nb, &corpus[0], &opts, 5).is_err());
    }
}
