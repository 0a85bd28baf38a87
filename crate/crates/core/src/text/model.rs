//! Shallow bag-of-n-grams classifier: averaged input embeddings followed by
//! a linear softmax layer, trained by SGD with a linearly decaying step.
//!
//! Input rows start at zero and are materialized only when a gradient
//! touches them, so a 2^20-bucket hash space costs memory proportional to
//! the n-grams actually seen. The output layer carries the random init.

use std::collections::{BTreeMap, HashMap};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::domain::{Conversation, OutcomeLabel};
use crate::error::{OdrError, Result};
use crate::rng;
use crate::text::ngrams::{featurize_ngrams, Vocabulary};
use crate::text::{conversation_stream, TokenStream};

const CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextHyper {
    pub embedding_dim: usize,
    pub ngram_max: usize,
    pub bucket_count: u32,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TextHyper {
    fn default() -> Self {
        TextHyper {
            embedding_dim: 50,
            ngram_max: 2,
            bucket_count: 1 << 20,
            epochs: 5,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDocument {
    pub id: String,
    pub tokens: TokenStream,
    /// 1 = seller wins.
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextFeatures {
    pub predicted_label: OutcomeLabel,
    pub p_seller_wins: f64,
    pub embedding: Vec<f64>,
    /// Set when the document had no known n-grams; `p_seller_wins` is then the training prior.
    pub neutral: bool,
}

#[derive(Debug, Clone)]
pub struct TextModel {
    hyper: TextHyper,
    vocab: Vocabulary,
    row_slot: HashMap<u32, usize>,
    row_ids: Vec<u32>,
    arena: Vec<f64>,
    /// `embedding_dim x 2`, row-major; column 1 is seller-wins.
    output: Vec<f64>,
    prior: f64,
    epoch_losses: Vec<f64>,
}

impl TextModel {
    pub fn hyper(&self) -> &TextHyper {
        &self.hyper
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn embedding_dim(&self) -> usize {
        self.hyper.embedding_dim
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// Mean training cross-entropy measured during each epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output
    }

    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        &mut self.output
    }

    /// Input embedding row; untouched rows are implicitly zero.
    pub fn input_row(&self, index: u32) -> Option<&[f64]> {
        let d = self.hyper.embedding_dim;
        self.row_slot
            .get(&index)
            .map(|&s| &self.arena[s * d..(s + 1) * d])
    }

    pub fn featurize(&self, stream: &TokenStream) -> Vec<u32> {
        featurize_ngrams(
            stream,
            &self.vocab,
            self.hyper.ngram_max,
            self.hyper.bucket_count,
        )
    }

    /// Mean of the input rows of `indices`.
    pub fn embed(&self, indices: &[u32]) -> Vec<f64> {
        let d = self.hyper.embedding_dim;
        let mut h = vec![0.0; d];
        if indices.is_empty() {
            return h;
        }
        for &i in indices {
            if let Some(row) = self.input_row(i) {
                for (acc, v) in h.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let inv = 1.0 / indices.len() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    fn softmax_from_hidden(&self, h: &[f64]) -> [f64; CLASSES] {
        let mut z = [0.0; CLASSES];
        for (d, hv) in h.iter().enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += hv * self.output[d * CLASSES + c];
            }
        }
        softmax2(z)
    }

    pub fn class_probabilities(&self, indices: &[u32]) -> [f64; CLASSES] {
        self.softmax_from_hidden(&self.embed(indices))
    }

    pub fn predict_tokens(&self, stream: &TokenStream) -> TextFeatures {
        let indices = self.featurize(stream);
        if indices.is_empty() {
            return TextFeatures {
                predicted_label: OutcomeLabel::from_positive(self.prior >= 0.5),
                p_seller_wins: self.prior,
                embedding: vec![0.0; self.hyper.embedding_dim],
                neutral: true,
            };
        }
        let h = self.embed(&indices);
        let p = self.softmax_from_hidden(&h);
        TextFeatures {
            predicted_label: OutcomeLabel::from_positive(p[1] >= 0.5),
            p_seller_wins: p[1],
            embedding: h,
            neutral: false,
        }
    }

    /// Mean softmax cross-entropy over pre-featurized documents.
    pub fn loss(&self, docs: &[(Vec<u32>, u8)]) -> f64 {
        let total: f64 = docs
            .iter()
            .map(|(idx, y)| -self.class_probabilities(idx)[*y as usize].ln())
            .sum();
        total / docs.len() as f64
    }

    /// Gradient of [`TextModel::loss`] with respect to the output weights.
    pub fn output_gradient(&self, docs: &[(Vec<u32>, u8)]) -> Vec<f64> {
        let mut grad = vec![0.0; self.output.len()];
        for (idx, y) in docs {
            let h = self.embed(idx);
            let p = self.softmax_from_hidden(&h);
            for (d, hv) in h.iter().enumerate() {
                for c in 0..CLASSES {
                    let target = if c == *y as usize { 1.0 } else { 0.0 };
                    grad[d * CLASSES + c] += hv * (p[c] - target);
                }
            }
        }
        let inv = 1.0 / docs.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        grad
    }

    pub fn write_vocab_tsv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("id\ttoken\n");
        for (i, t) in self.vocab.tokens().iter().enumerate() {
            out.push_str(&format!("{i}\t{t}\n"));
        }
        std::fs::write(path, out).map_err(|e| OdrError::io(path, e))
    }

    fn slot_for(&mut self, index: u32) -> usize {
        if let Some(&s) = self.row_slot.get(&index) {
            return s;
        }
        let s = self.row_ids.len();
        self.row_ids.push(index);
        self.row_slot.insert(index, s);
        self.arena
            .extend(std::iter::repeat_n(0.0, self.hyper.embedding_dim));
        s
    }

    /// Forward and backward pass for one document: loss, hidden vector,
    /// output error `p - onehot(label)` and the gradient at the hidden layer.
    fn backprop(&self, indices: &[u32], label: u8) -> (f64, Vec<f64>, [f64; CLASSES], Vec<f64>) {
        let h = self.embed(indices);
        let p = self.softmax_from_hidden(&h);
        let loss = -p[label as usize].max(f64::MIN_POSITIVE).ln();
        let mut err = [0.0; CLASSES];
        for (c, e) in err.iter_mut().enumerate() {
            *e = p[c] - if c == label as usize { 1.0 } else { 0.0 };
        }
        let mut grad_h = vec![0.0; self.hyper.embedding_dim];
        for (k, gh) in grad_h.iter_mut().enumerate() {
            for (c, e) in err.iter().enumerate() {
                *gh += self.output[k * CLASSES + c] * e;
            }
        }
        (loss, h, err, grad_h)
    }

    /// Gradient of [`TextModel::loss`] with respect to every input row the
    /// documents touch, keyed by row index.
    pub fn input_gradient(&self, docs: &[(Vec<u32>, u8)]) -> BTreeMap<u32, Vec<f64>> {
        let d = self.hyper.embedding_dim;
        let mut grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let inv_docs = 1.0 / docs.len() as f64;
        for (idx, y) in docs {
            if idx.is_empty() {
                continue;
            }
            let (_, _, _, grad_h) = self.backprop(idx, *y);
            let scale = inv_docs / idx.len() as f64;
            for &i in idx {
                let g = grads.entry(i).or_insert_with(|| vec![0.0; d]);
                for (a, v) in g.iter_mut().zip(&grad_h) {
                    *a += scale * v;
                }
            }
        }
        grads
    }

    /// Adds `delta` to component `k` of input row `index`, materializing it.
    pub fn nudge_input(&mut self, index: u32, k: usize, delta: f64) {
        let d = self.hyper.embedding_dim;
        let s = self.slot_for(index);
        self.arena[s * d + k] += delta;
    }

    /// One SGD step on a single document; returns its loss before the update.
    fn sgd_step(&mut self, indices: &[u32], label: u8, lr: f64) -> f64 {
        let d = self.hyper.embedding_dim;
        let (loss, h, err, grad_h) = self.backprop(indices, label);
        for (k, hv) in h.iter().enumerate() {
            for (c, e) in err.iter().enumerate() {
                self.output[k * CLASSES + c] -= lr * hv * e;
            }
        }
        let scale = lr / indices.len() as f64;
        for &i in indices {
            let s = self.slot_for(i);
            let row = &mut self.arena[s * d..(s + 1) * d];
            for (r, g) in row.iter_mut().zip(&grad_h) {
                *r -= scale * g;
            }
        }
        loss
    }
}

fn softmax2(z: [f64; CLASSES]) -> [f64; CLASSES] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Trains on `docs`. Documents are ordered by id before the seeded per-epoch
/// shuffle, so the input order never affects the result.
pub fn train_text_model(docs: &[LabeledDocument], hyper: &TextHyper) -> Result<TextModel> {
    if hyper.embedding_dim == 0 || hyper.ngram_max == 0 || hyper.bucket_count == 0 {
        return Err(OdrError::Config(
            "embedding_dim, ngram_max and bucket_count must be positive".into(),
        ));
    }
    let positives = docs.iter().filter(|d| d.label == 1).count();
    if positives == 0 || positives == docs.len() {
        return Err(OdrError::SingleClass);
    }
    let mut sorted: Vec<&LabeledDocument> = docs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let vocab = Vocabulary::build(sorted.iter().map(|d| &d.tokens));
    let dim = hyper.embedding_dim;
    let mut init = rng::derive(hyper.seed, &[0x7e47, 0]);
    let bound = 1.0 / dim as f64;
    let output = (0..dim * CLASSES)
        .map(|_| init.random_range(-bound..bound))
        .collect();
    let mut model = TextModel {
        hyper: hyper.clone(),
        vocab,
        row_slot: HashMap::new(),
        row_ids: Vec::new(),
        arena: Vec::new(),
        output,
        prior: positives as f64 / docs.len() as f64,
        epoch_losses: Vec::new(),
    };
    let featurized: Vec<(Vec<u32>, u8)> = sorted
        .iter()
        .map(|d| (model.featurize(&d.tokens), d.label))
        .collect();

    let total_steps = (hyper.epochs * featurized.len()).max(1) as f64;
    let mut step = 0usize;
    for epoch in 0..hyper.epochs {
        let mut order: Vec<usize> = (0..featurized.len()).collect();
        order.shuffle(&mut rng::derive(hyper.seed, &[0x7e47, 1, epoch as u64]));
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for &i in &order {
            let lr = hyper.learning_rate * (1.0 - step as f64 / total_steps);
            step += 1;
            let (idx, y) = &featurized[i];
            if idx.is_empty() {
                continue;
            }
            epoch_loss += model.sgd_step(idx, *y, lr);
            counted += 1;
        }
        model
            .epoch_losses
            .push(if counted > 0 { epoch_loss / counted as f64 } else { 0.0 });
    }
    Ok(model)
}

pub fn predict_text(model: &TextModel, conversation: &Conversation) -> TextFeatures {
    model.predict_tokens(&conversation_stream(conversation))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextModelFile {
    pub hyper: TextHyper,
    pub prior: f64,
    pub vocabulary: Vec<String>,
    /// Materialized input rows, ascending.
    pub row_indices: Vec<u32>,
    /// Little-endian f64 row data, base64.
    pub rows_b64: String,
    pub output_weights: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

impl From<&TextModel> for TextModelFile {
    fn from(m: &TextModel) -> Self {
        let mut ids = m.row_ids.clone();
        ids.sort_unstable();
        let mut bytes = Vec::with_capacity(ids.len() * m.hyper.embedding_dim * 8);
        for &id in &ids {
            for v in m.input_row(id).expect("materialized row") {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        TextModelFile {
            hyper: m.hyper.clone(),
            prior: m.prior,
            vocabulary: m.vocab.tokens().to_vec(),
            row_indices: ids,
            rows_b64: B64.encode(bytes),
            output_weights: m.output.clone(),
            epoch_losses: m.epoch_losses.clone(),
        }
    }
}

impl TryFrom<TextModelFile> for TextModel {
    type Error = OdrError;

    fn try_from(f: TextModelFile) -> Result<Self> {
        let dim = f.hyper.embedding_dim;
        if f.output_weights.len() != dim * CLASSES {
            return Err(OdrError::Model("text output weights have wrong shape".into()));
        }
        let bytes = B64
            .decode(f.rows_b64.as_bytes())
            .map_err(|e| OdrError::Model(format!("text rows: {e}")))?;
        if bytes.len() != f.row_indices.len() * dim * 8 {
            return Err(OdrError::Model("text rows have wrong length".into()));
        }
        let arena: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if arena.iter().chain(&f.output_weights).any(|v| !v.is_finite()) {
            return Err(OdrError::Model("non-finite text model weight".into()));
        }
        let row_slot = f
            .row_indices
            .iter()
            .enumerate()
            .map(|(s, &id)| (id, s))
            .collect();
        Ok(TextModel {
            hyper: f.hyper,
            vocab: Vocabulary::from_tokens(f.vocabulary),
            row_slot,
            row_ids: f.row_indices,
            arena,
            output: f.output_weights,
            prior: f.prior,
            epoch_losses: f.epoch_losses,
        })
    }
}
