//! Feature ablations. A unit is a set of schema columns: one source field
//! (all columns computed from it), one family, or a union of families.

use serde::{Deserialize, Serialize};

use super::{evaluate_folds, prepare_corpus_folds, MeanMetrics, PreparedFolds};
use crate::domain::{DisputeCase, Family};
use crate::error::{OdrError, Result};
use crate::features::FeatureSchema;
use crate::learners::LearnerSpec;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// All columns except one source field's.
    LeaveOneFeatureOut,
    /// One source field's columns only.
    SingleFeature,
    /// Each family alone, then the four composites.
    FeatureFamily,
    /// The four composites, then every family left out in turn.
    FamilyCombination,
}

impl std::str::FromStr for AblationMode {
    type Err = OdrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lofo" | "leave-one-feature-out" => Ok(AblationMode::LeaveOneFeatureOut),
            "single" | "single-feature" => Ok(AblationMode::SingleFeature),
            "family" | "feature-family" => Ok(AblationMode::FeatureFamily),
            "combination" | "family-combination" => Ok(AblationMode::FamilyCombination),
            other => Err(OdrError::Config(format!("unknown ablation mode `{other}`"))),
        }
    }
}

/// Composite family groups.
pub const COMPOSITES: [(&str, &[Family]); 4] = [
    ("All purchase", &[Family::Transaction, Family::Claim]),
    ("All buyer", &[Family::ClaimBuyer, Family::BuyerData]),
    ("All seller", &[Family::ClaimSeller, Family::SellerData]),
    (
        "All user",
        &[Family::ClaimBuyer, Family::BuyerData, Family::ClaimSeller, Family::SellerData],
    ),
];

/// Named column subsets for a mode, in report order.
pub fn ablation_units(schema: &FeatureSchema, mode: AblationMode) -> Vec<(String, Vec<usize>)> {
    let all: Vec<usize> = (0..schema.len()).collect();
    let composites = || {
        COMPOSITES
            .iter()
            .map(|(name, fams)| (name.to_string(), schema.columns_of_families(fams)))
            .collect::<Vec<_>>()
    };
    match mode {
        AblationMode::LeaveOneFeatureOut => schema
            .sources()
            .into_iter()
            .map(|s| {
                let drop = schema.columns_of_source(&s);
                (s, all.iter().copied().filter(|j| !drop.contains(j)).collect())
            })
            .collect(),
        AblationMode::SingleFeature => schema
            .sources()
            .into_iter()
            .map(|s| {
                let cols = schema.columns_of_source(&s);
                (s, cols)
            })
            .collect(),
        AblationMode::FeatureFamily => {
            let mut units: Vec<(String, Vec<usize>)> = Family::ALL
                .iter()
                .map(|f| (f.name().to_string(), schema.columns_of_families(&[*f])))
                .collect();
            units.extend(composites());
            units
        }
        AblationMode::FamilyCombination => {
            let mut units = composites();
            units.extend(Family::ALL.iter().map(|f| {
                let others: Vec<Family> = Family::ALL.iter().copied().filter(|g| g != f).collect();
                (format!("All but {}", f.name()), schema.columns_of_families(&others))
            }));
            units
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub unit: String,
    pub n_columns: usize,
    pub mean: MeanMetrics,
    pub fold_aurocs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub learner: String,
    /// The model with every column, for reference.
    pub full: MeanMetrics,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn best(&self) -> Option<&AblationRow> {
        self.rows.iter().max_by(|a, b| a.mean.auroc.total_cmp(&b.mean.auroc))
    }

    pub fn worst(&self) -> Option<&AblationRow> {
        self.rows.iter().min_by(|a, b| a.mean.auroc.total_cmp(&b.mean.auroc))
    }
}

pub fn ablate_prepared(spec: &LearnerSpec, folds: &PreparedFolds, mode: AblationMode, seed: u64) -> Result<AblationReport> {
    let full = evaluate_folds(spec, folds, None, seed)?.mean;
    let mut rows = Vec::new();
    for (unit, cols) in ablation_units(&folds.schema, mode) {
        if cols.is_empty() {
            return Err(OdrError::InvalidInput(format!("ablation unit `{unit}` has no columns")));
        }
        let cv = evaluate_folds(spec, folds, Some(&cols), seed)?;
        rows.push(AblationRow {
            unit,
            n_columns: cols.len(),
            fold_aurocs: cv.fold_aurocs(),
            mean: cv.mean,
        });
    }
    Ok(AblationReport {
        mode,
        learner: spec.kind().to_string(),
        full,
        rows,
    })
}

pub fn ablate(spec: &LearnerSpec, corpus: &[DisputeCase], mode: AblationMode, k: usize, cfg: &PipelineConfig, seed: u64) -> Result<AblationReport> {
    let folds = prepare_corpus_folds(corpus, k, cfg, seed)?;
    ablate_prepared(spec, &folds, mode, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, GeneratorConfig};

    fn schema() -> FeatureSchema {
        let (corpus, _) = generate_corpus(&GeneratorConfig {
            n_cases: 200,
            seed: 2,
            ..GeneratorConfig::default()
        })
        .unwrap();
        FeatureSchema::build(&corpus, 4)
    }

    #[test]
    fn family_mode_has_seven_families_and_four_composites() {
        let s = schema();
        let units = ablation_units(&s, AblationMode::FeatureFamily);
        assert_eq!(units.len(), 11);
        let names: Vec<&str> = units.iter().map(|u| u.0.as_str()).collect();
        assert_eq!(&names[7..], &["All purchase", "All buyer", "All seller", "All user"]);
        // Single-family units partition the schema.
        let mut cols: Vec<usize> = units[..7].iter().flat_map(|u| u.1.clone()).collect();
        cols.sort_unstable();
        assert_eq!(cols, (0..s.len()).collect::<Vec<_>>());
        assert!(units.iter().all(|u| !u.1.is_empty()));
    }

    #[test]
    fn feature_units_are_complementary() {
        let s = schema();
        let lofo = ablation_units(&s, AblationMode::LeaveOneFeatureOut);
        let single = ablation_units(&s, AblationMode::SingleFeature);
        assert_eq!(lofo.len(), single.len());
        for ((a, kept), (b, only)) in lofo.iter().zip(&single) {
            assert_eq!(a, b);
            assert_eq!(kept.len() + only.len(), s.len());
        }
        assert!(single.iter().any(|u| u.0 == "text.embedding" && u.1.len() == 4));
    }

    #[test]
    fn combination_mode_rows() {
        let units = ablation_units(&schema(), AblationMode::FamilyCombination);
        assert_eq!(units.len(), 11);
        assert!(units[4].0.starts_with("All but"));
        assert_eq!("lofo".parse::<AblationMode>().unwrap(), AblationMode::LeaveOneFeatureOut);
        assert!("nope".parse::<AblationMode>().is_err());
    }
}
