//! Local surrogate explanations for the text classifier.
//!
//! Each distinct word of a document becomes one binary variable. Samples
//! drop a random half of the words (every occurrence of a dropped word),
//! the text model scores each perturbed document, and a kernel-weighted
//! ridge regression from word presence to the score gives each word's
//! weight. Author tokens are never dropped.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OdrError, Result};
use crate::rng;
use crate::text::{is_author_token, TextModel, TokenStream};

const STREAM_LIME: u64 = 0x11e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Kernel width; `None` means `0.75 · sqrt(distinct words)`.
    pub kernel_width: Option<f64>,
    /// Ridge penalty on the word weights (not the intercept).
    pub ridge: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 1000,
            kernel_width: None,
            ridge: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenExplanation {
    /// Distinct words by |weight|, largest first.
    pub tokens: Vec<TokenWeight>,
    pub intercept: f64,
    /// Kernel-weighted R² of the surrogate; 1 when degenerate.
    pub r_squared: f64,
    /// Model score of the unperturbed document.
    pub prediction: f64,
    /// Set when every perturbation scored the same; weights are then zero.
    pub degenerate: bool,
    pub n_samples: usize,
}

/// Presence vector of one sample and the model's score for it.
type Sample = (Vec<bool>, f64);

/// Kernel-weighted ridge regression of scores on word presence. Samples are
/// put in a canonical order first, so the fit does not depend on the order
/// they were drawn in.
pub fn fit_surrogate(samples: &[Sample], n_words: usize, width: f64, ridge: f64) -> Result<(Vec<f64>, f64, f64)> {
    if samples.is_empty() {
        return Err(OdrError::InvalidInput("no surrogate samples".into()));
    }
    if !(ridge > 0.0) || !(width > 0.0) {
        return Err(OdrError::Config("ridge penalty and kernel width must be positive".into()));
    }
    let mut sorted: Vec<&Sample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let weights: Vec<f64> = sorted
        .iter()
        .map(|(present, _)| {
            let masked = present.iter().filter(|p| !**p).count() as f64;
            (-masked / (width * width)).exp()
        })
        .collect();
    let w_sum: f64 = weights.iter().sum();
    let mut x_mean = vec![0.0; n_words];
    let mut y_mean = 0.0;
    for ((present, y), w) in sorted.iter().zip(&weights) {
        for (m, &p) in x_mean.iter_mut().zip(present) {
            if p {
                *m += w;
            }
        }
        y_mean += w * y;
    }
    x_mean.iter_mut().for_each(|m| *m /= w_sum);
    y_mean /= w_sum;

    let mut gram = DMatrix::<f64>::identity(n_words, n_words) * ridge;
    let mut rhs = DVector::<f64>::zeros(n_words);
    let mut xc = vec![0.0; n_words];
    for ((present, y), &w) in sorted.iter().zip(&weights) {
        for (j, c) in xc.iter_mut().enumerate() {
            *c = f64::from(u8::from(present[j])) - x_mean[j];
        }
        let yc = y - y_mean;
        for a in 0..n_words {
            let wa = w * xc[a];
            rhs[a] += wa * yc;
            for b in a..n_words {
                gram[(a, b)] += wa * xc[b];
            }
        }
    }
    for a in 0..n_words {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let beta = gram
        .cholesky()
        .ok_or_else(|| OdrError::InvalidInput("surrogate system is not positive definite".into()))?
        .solve(&rhs);
    let beta: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();

    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((present, y), w) in sorted.iter().zip(&weights) {
        let fit = intercept + beta.iter().zip(present).filter(|(_, p)| **p).map(|(b, _)| b).sum::<f64>();
        ss_res += w * (y - fit).powi(2);
        ss_tot += w * (y - y_mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((beta, intercept, r2))
}

/// Explains `predict` at `document`. Deterministic for a seed and
/// independent of the thread count.
pub fn explain_text<F>(predict: &F, document: &TokenStream, cfg: &LimeConfig, seed: u64) -> Result<TokenExplanation>
where
    F: Fn(&TokenStream) -> f64 + Sync,
{
    if cfg.n_samples == 0 {
        return Err(OdrError::Config("n_samples must be positive".into()));
    }
    let mut words: Vec<&str> = Vec::new();
    for t in &document.tokens {
        if !is_author_token(t) && !words.contains(&t.as_str()) {
            words.push(t);
        }
    }
    if words.is_empty() {
        return Err(OdrError::InvalidInput("document has no words to explain".into()));
    }
    let m = words.len();
    let width = cfg.kernel_width.unwrap_or(0.75 * (m as f64).sqrt());
    let prediction = predict(document);
    let samples: Vec<Sample> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::derive(seed, &[STREAM_LIME, s as u64]);
            let present: Vec<bool> = (0..m).map(|_| r.random_bool(0.5)).collect();
            let kept = TokenStream {
                tokens: document
                    .tokens
                    .iter()
                    .filter(|t| is_author_token(t) || words.iter().position(|w| w == t).is_some_and(|j| present[j]))
                    .cloned()
                    .collect(),
            };
            (present, predict(&kept))
        })
        .collect();

    let first = samples[0].1;
    if samples.iter().all(|(_, y)| *y == first) {
        return Ok(TokenExplanation {
            tokens: words
                .iter()
                .map(|w| TokenWeight {
                    token: w.to_string(),
                    weight: 0.0,
                })
                .collect(),
            intercept: first,
            r_squared: 1.0,
            prediction,
            degenerate: true,
            n_samples: cfg.n_samples,
        });
    }
    let (beta, intercept, r_squared) = fit_surrogate(&samples, m, width, cfg.ridge)?;
    let mut tokens: Vec<TokenWeight> = words
        .iter()
        .zip(&beta)
        .map(|(w, &weight)| TokenWeight {
            token: w.to_string(),
            weight,
        })
        .collect();
    tokens.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then_with(|| a.token.cmp(&b.token)));
    Ok(TokenExplanation {
        tokens,
        intercept,
        r_squared,
        prediction,
        degenerate: false,
        n_samples: cfg.n_samples,
    })
}

/// [`explain_text`] against the text model's seller-wins probability.
pub fn explain_with_model(model: &TextModel, document: &TokenStream, cfg: &LimeConfig, seed: u64) -> Result<TokenExplanation> {
    explain_text(&|s: &TokenStream| model.predict_tokens(s).p_seller_wins, document, cfg, seed)
}
