//! Bag-of-n-grams featurization.
//!
//! Unigrams map to ids in an explicit vocabulary `[0, V)`. Higher-order
//! n-grams are hashed with 64-bit FNV-1a over the tokens joined by the
//! unit separator `0x1F` and land in `[V, V + bucket_count)`. FNV-1a is
//! byte-oriented, so indices are identical on every platform.

use std::collections::{BTreeSet, HashMap};

use crate::rng::fnv1a64;
use crate::text::TokenStream;

const SEPARATOR: char = '\u{1f}';

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// Ids are assigned in lexicographic token order, independent of document order.
    pub fn build<'a>(streams: impl IntoIterator<Item = &'a TokenStream>) -> Self {
        let set: BTreeSet<&str> = streams
            .into_iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
            .collect();
        Self::from_tokens(set.into_iter().map(str::to_string).collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

pub fn ngram_hash(tokens: &[String]) -> u64 {
    let mut joined = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            joined.push(SEPARATOR);
        }
        joined.push_str(t);
    }
    fnv1a64(joined.as_bytes())
}

/// Indices of the stream's n-grams; out-of-vocabulary unigrams are dropped.
pub fn featurize_ngrams(
    stream: &TokenStream,
    vocab: &Vocabulary,
    ngram_max: usize,
    bucket_count: u32,
) -> Vec<u32> {
    assert!(ngram_max >= 1, "ngram_max must be at least 1");
    assert!(bucket_count > 0, "bucket_count must be positive");
    let base = vocab.len() as u64;
    let toks = &stream.tokens;
    let mut out: Vec<u32> = toks.iter().filter_map(|t| vocab.id(t)).collect();
    for n in 2..=ngram_max {
        if toks.len() < n {
            break;
        }
        for w in toks.windows(n) {
            let bucket = ngram_hash(w) % bucket_count as u64;
            out.push((base + bucket) as u32);
        }
    }
    out
}
