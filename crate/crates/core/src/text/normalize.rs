//! Case folding, stop-word removal and stemming.
//!
//! The stemmer is the Snowball English stemmer ("Porter2") as shipped by the
//! `rust-stemmers` 1.2 crate. It is applied until the token stops changing,
//! and stop words are dropped both before and after stemming, which makes
//! [`normalize`] idempotent on its own output.

use std::collections::HashSet;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

/// English stop words. Negations are deliberately absent: "not received"
/// carries signal in this domain.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "im", "in", "into", "is", "it", "its", "itself",
    "ive", "just", "me", "more", "most", "my", "myself", "of", "off", "on", "once", "only", "or",
    "other", "ought", "our", "ours", "ourselves", "out", "over", "own", "same", "she", "should",
    "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why",
    "will", "with", "would", "you", "youll", "your", "youre", "yours", "yourself", "yourselves",
    "also", "us", "ill", "id", "s", "t", "d", "ll", "m", "re", "ve", "y",
];

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.iter().copied().collect())
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Normalized tokens of one text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Lower-cased alphanumeric words; apostrophes are folded away ("don't" -> "dont").
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if ch == '\'' || ch == '\u{2019}' {
            // folded
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn stem(token: &str) -> String {
    let mut cur = token.to_string();
    loop {
        let next = stemmer().stem(&cur).into_owned();
        if next == cur || next.is_empty() {
            return cur;
        }
        cur = next;
    }
}

pub fn normalize(text: &str) -> TokenStream {
    let tokens = tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| stem(&t))
        .filter(|t| !t.is_empty() && !is_stopword(t))
        .collect();
    TokenStream { tokens }
}
