//! One model per (claim type, seller type) segment, averaged by size.

use serde::{Deserialize, Serialize};

use super::{evaluate_folds, prepare_folds, MeanMetrics};
use crate::domain::{ClaimType, DisputeCase, SellerType};
use crate::error::{OdrError, Result};
use crate::features::FeatureSchema;
use crate::learners::LearnerSpec;
use crate::pipeline::{labeled_cases, PipelineConfig};
use crate::rng;

const STREAM_SEGMENT: u64 = 0x5e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    /// `"{claim_type}/{seller_type}"`, e.g. `INR/B2C`.
    pub segment: String,
    pub n: usize,
    pub positives: usize,
    /// `None` when the segment was skipped.
    pub mean: Option<MeanMetrics>,
    /// Share of the included cases; zero for skipped segments.
    pub weight: f64,
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub learner: String,
    pub rows: Vec<SegmentRow>,
    pub weighted_auroc: f64,
}

impl SegmentReport {
    pub fn warnings(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter_map(|r| r.skipped_reason.as_ref().map(|w| format!("segment {} skipped: {w}", r.segment)))
            .collect()
    }
}

fn segment_key(c: &DisputeCase) -> String {
    format!("{}/{}", c.claim.claim_type, c.seller.seller_type)
}

/// Cross-validates a separate pipeline inside each segment. Segments without
/// `k` cases of each class are skipped and excluded from the average.
pub fn segment_evaluate(spec: &LearnerSpec, corpus: &[DisputeCase], k: usize, cfg: &PipelineConfig, seed: u64) -> Result<SegmentReport> {
    let schema = FeatureSchema::build(corpus, cfg.text.embedding_dim);
    let cases = labeled_cases(corpus);
    let mut rows = Vec::new();
    for claim in [ClaimType::Inr, ClaimType::Snad] {
        for seller in [SellerType::B2C, SellerType::C2C] {
            let key = format!("{claim}/{seller}");
            let members: Vec<&DisputeCase> = cases.iter().copied().filter(|c| segment_key(c) == key).collect();
            let positives = members.iter().filter(|c| c.label() == Some(1)).count();
            let negatives = members.len() - positives;
            let mut row = SegmentRow {
                segment: key.clone(),
                n: members.len(),
                positives,
                mean: None,
                weight: 0.0,
                skipped_reason: None,
            };
            if positives < k || negatives < k {
                row.skipped_reason = Some(format!("{positives} positive and {negatives} negative cases, need {k} of each"));
                log::warn!("segment {key} skipped");
                rows.push(row);
                continue;
            }
            let s = rng::derive_seed(seed, &[STREAM_SEGMENT, rng::str_stream(&key)]);
            let folds = prepare_folds(&members, &schema, k, cfg, s)?;
            row.mean = Some(evaluate_folds(spec, &folds, None, s)?.mean);
            rows.push(row);
        }
    }
    let included: usize = rows.iter().filter(|r| r.mean.is_some()).map(|r| r.n).sum();
    if included == 0 {
        return Err(OdrError::InvalidInput("no segment has enough cases of both classes".into()));
    }
    for r in &mut rows {
        if r.mean.is_some() {
            r.weight = r.n as f64 / included as f64;
        }
    }
    let weighted_auroc = rows.iter().filter_map(|r| r.mean.map(|m| m.auroc * r.weight)).sum();
    Ok(SegmentReport {
        learner: spec.kind().to_string(),
        rows,
        weighted_auroc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, GeneratorConfig};
    use crate::text::TextHyper;

    #[test]
    fn single_segment_average_is_that_segment() {
        let (mut corpus, _) = generate_corpus(&GeneratorConfig {
            n_cases: 400,
            seed: 8,
            ..GeneratorConfig::default()
        })
        .unwrap();
        corpus.retain(|c| c.claim.claim_type == ClaimType::Inr && c.seller.seller_type == SellerType::C2C);
        let cfg = PipelineConfig {
            text: TextHyper {
                embedding_dim: 4,
                bucket_count: 1 << 10,
                epochs: 1,
                ..TextHyper::default()
            },
            text_folds: 2,
        };
        let rep = segment_evaluate(&LearnerSpec::default_for("gaussian_nb").unwrap(), &corpus, 2, &cfg, 0).unwrap();
        let included: Vec<&SegmentRow> = rep.rows.iter().filter(|r| r.mean.is_some()).collect();
        assert_eq!(included.len(), 1);
        assert_eq!(included[0].weight, 1.0);
        assert_eq!(rep.weighted_auroc, included[0].mean.unwrap().auroc);
        assert_eq!(rep.warnings().len(), 3);
    }
}
