//! Versioned JSON model files.
//!
//! A file carries the classifier, the feature schema it was trained on and,
//! when textual features are used, the text model that produces them.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BaselineModel, LearnerSpec, Model, Tree, TreeEnsembleModel};
use crate::error::{OdrError, Result};
use crate::features::FeatureSchema;
use crate::text::{TextModel, TextModelFile};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Content hash of the file with this field blank.
    pub model_version: String,
    pub learner: LearnerSpec,
    pub seed: u64,
    pub schema: FeatureSchema,
    pub n_train: usize,
    pub train_positive_rate: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: String,
    pub schema_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub trees: Vec<Tree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineModel>,
    pub text_model: Option<TextModelFile>,
    pub metadata: ModelMetadata,
}

impl ModelFile {
    pub fn new(model: &Model, text: Option<&TextModel>, mut metadata: ModelMetadata) -> Result<Self> {
        if model.schema_hash() != metadata.schema.hash {
            return Err(OdrError::SchemaMismatch {
                expected: metadata.schema.hash.clone(),
                found: model.schema_hash().to_string(),
            });
        }
        metadata.model_version = String::new();
        let (base_score, eta, trees, baseline) = match model {
            Model::Gbdt(m) => (Some(m.base_score), Some(m.eta), m.trees.clone(), None),
            Model::Baseline(b) => (None, None, Vec::new(), Some(b.clone())),
        };
        let mut file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: model.kind().to_string(),
            schema_hash: model.schema_hash().to_string(),
            base_score,
            eta,
            trees,
            baseline,
            text_model: text.map(TextModelFile::from),
            metadata,
        };
        file.metadata.model_version = file.content_hash()?;
        Ok(file)
    }

    /// Replaces the free-form metadata and recomputes the model version.
    pub fn with_extra(mut self, extra: BTreeMap<String, serde_json::Value>) -> Result<Self> {
        self.metadata.extra = extra;
        self.metadata.model_version = self.content_hash()?;
        Ok(self)
    }

    fn content_hash(&self) -> Result<String> {
        let mut blank = self.clone();
        blank.metadata.model_version = String::new();
        let bytes = serde_json::to_vec(&blank).map_err(|e| OdrError::Model(e.to_string()))?;
        Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
    }

    pub fn model_version(&self) -> &str {
        &self.metadata.model_version
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.metadata.schema
    }

    /// Rebuilds the classifier, checking its structure.
    pub fn model(&self) -> Result<Model> {
        let n_features = self.metadata.schema.len();
        match (&self.metadata.learner, &self.baseline) {
            (LearnerSpec::Gbdt(params), None) => {
                let m = TreeEnsembleModel {
                    schema_hash: self.schema_hash.clone(),
                    n_features,
                    base_score: self
                        .base_score
                        .ok_or_else(|| OdrError::Model("gbdt file lacks base_score".into()))?,
                    eta: self
                        .eta
                        .ok_or_else(|| OdrError::Model("gbdt file lacks eta".into()))?,
                    params: params.clone(),
                    seed: self.metadata.seed,
                    trees: self.trees.clone(),
                };
                m.validate()?;
                Ok(Model::Gbdt(m))
            }
            (spec, Some(b)) if spec.kind() == b.variant.kind() => Ok(Model::Baseline(b.clone())),
            _ => Err(OdrError::Model(format!(
                "learner `{}` does not match stored parameters",
                self.metadata.learner.kind()
            ))),
        }
    }

    pub fn text_model(&self) -> Result<Option<TextModel>> {
        self.text_model.clone().map(TextModel::try_from).transpose()
    }

    /// Parses a model file, rejecting other format versions before looking
    /// at the rest of the document.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| OdrError::Model(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| OdrError::Model("missing format_version".into()))?;
        if found != u64::from(MODEL_FORMAT_VERSION) {
            return Err(OdrError::Version {
                expected: MODEL_FORMAT_VERSION,
                found: u32::try_from(found).unwrap_or(u32::MAX),
            });
        }
        let file: ModelFile = serde_path_to_error::deserialize(value)
            .map_err(|e| OdrError::Model(format!("{}: {}", e.path(), e.inner())))?;
        if file.schema_hash != file.metadata.schema.hash {
            return Err(OdrError::Model("schema hash does not match embedded schema".into()));
        }
        if file.content_hash()? != file.metadata.model_version {
            return Err(OdrError::Model("model_version does not match file content".into()));
        }
        Ok(file)
    }
}

pub fn save_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec(file).map_err(|e| OdrError::Model(e.to_string()))?;
    bytes.push(b'\n');
    let mut f = std::fs::File::create(path).map_err(|e| OdrError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| OdrError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| OdrError::io(path, e))?;
    ModelFile::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Family;
    use crate::features::{Column, ColumnKind, Matrix};
    use crate::learners::{fit, Dataset, GbdtParams};
    use rand::{Rng, SeedableRng};

    fn schema(d: usize) -> FeatureSchema {
        let columns = (0..d)
            .map(|j| Column {
                name: format!("f{j}"),
                family: Family::Claim,
                kind: ColumnKind::Numeric,
                source: format!("claim.f{j}"),
            })
            .collect();
        FeatureSchema::from_columns(columns, 0)
    }

    fn trained(spec: &LearnerSpec) -> (ModelFile, Model) {
        let s = schema(3);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                (0..3)
                    .map(|_| if r.random_bool(0.05) { f64::NAN } else { r.random_range(-2.0..2.0) })
                    .collect()
            })
            .collect();
        let y = rows.iter().map(|v| u8::from(v[0] + v[1] * v[2] > 0.0)).collect();
        let data = Dataset::new(Matrix::from_rows(&rows), y, s.names(), s.hash.clone());
        let model = fit(spec, &data, 3).unwrap();
        let meta = ModelMetadata {
            model_version: String::new(),
            learner: spec.clone(),
            seed: 3,
            schema: s,
            n_train: 300,
            train_positive_rate: data.positives() as f64 / 300.0,
            extra: BTreeMap::new(),
        };
        (ModelFile::new(&model, None, meta).unwrap(), model)
    }

    #[test]
    fn round_trip_predictions_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let specs = [
            LearnerSpec::Gbdt(GbdtParams {
                n_trees: 20,
                ..GbdtParams::default()
            }),
            LearnerSpec::default_for("decision_tree").unwrap(),
            LearnerSpec::default_for("random_forest").unwrap(),
            LearnerSpec::default_for("gaussian_nb").unwrap(),
            LearnerSpec::default_for("knn").unwrap(),
            LearnerSpec::default_for("mlp").unwrap(),
            LearnerSpec::Majority,
        ];
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let probes: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                (0..3)
                    .map(|_| if r.random_bool(0.1) { f64::NAN } else { r.random_range(-3.0..3.0) })
                    .collect()
            })
            .collect();
        for spec in &specs {
            let (file, model) = trained(spec);
            let path = dir.path().join(format!("{}.json", spec.kind()));
            save_model(&path, &file).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.schema_hash, file.metadata.schema.hash);
            let restored = back.model().unwrap();
            let max_diff = probes
                .iter()
                .map(|p| (model.predict_row(p) - restored.predict_row(p)).abs())
                .fold(0.0, f64::max);
            assert_eq!(max_diff, 0.0, "{}", spec.kind());
        }
    }

    #[test]
    fn version_mismatch_and_corruption_are_errors() {
        let (file, _) = trained(&LearnerSpec::Majority);
        let mut v = serde_json::to_value(&file).unwrap();
        v["format_version"] = 2.into();
        assert!(matches!(
            ModelFile::from_json(&v.to_string()),
            Err(OdrError::Version { expected: 1, found: 2 })
        ));
        let text = serde_json::to_string(&file).unwrap();
        assert!(matches!(ModelFile::from_json(&text[..text.len() / 2]), Err(OdrError::Model(_))));
        let tampered = text.replace("\"seed\":3", "\"seed\":4");
        assert!(matches!(ModelFile::from_json(&tampered), Err(OdrError::Model(_))));
    }

    #[test]
    fn model_version_is_a_content_hash() {
        let (a, _) = trained(&LearnerSpec::Majority);
        let (b, _) = trained(&LearnerSpec::Majority);
        assert_eq!(a.model_version(), b.model_version());
        assert_eq!(a.model_version().len(), 16);
        let (c, _) = trained(&LearnerSpec::default_for("gaussian_nb").unwrap());
        assert_ne!(a.model_version(), c.model_version());
    }

    #[test]
    fn schema_mismatch_on_predict_names_both_hashes() {
        let (_, model) = trained(&LearnerSpec::Majority);
        let err = model.predict("other", &Matrix::new(1, 3, vec![0.0; 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("other") && msg.contains(model.schema_hash()));
    }
}
