//! Where the classifier goes wrong: accuracy by appeal count, summary
//! lengths and words over-represented in the summaries of misclassified
//! cases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{DisputeCase, OutcomeLabel};
use crate::error::{OdrError, Result};
use crate::text::{is_stopword, tokenize};

pub const MIN_TERM_FREQUENCY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppealGroup {
    /// `0`, `1`, `2` or `3+`.
    pub group: String,
    pub n: usize,
    pub share: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRatio {
    pub term: String,
    pub count_incorrect: usize,
    pub count_correct: usize,
    /// Smoothed relative frequency among incorrect over correct summaries.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysisReport {
    pub n: usize,
    pub accuracy: f64,
    /// Observed groups only.
    pub groups: Vec<AppealGroup>,
    /// Mean agent-summary length in characters; `None` for an empty set.
    pub mean_summary_chars_correct: Option<f64>,
    pub mean_summary_chars_incorrect: Option<f64>,
    /// Terms seen at least [`MIN_TERM_FREQUENCY`] times, highest ratio first.
    pub terms: Vec<TermRatio>,
}

fn appeal_group(count: u32) -> &'static str {
    match count {
        0 => "0",
        1 => "1",
        2 => "2",
        _ => "3+",
    }
}

/// `predicted[i]` is the prediction for `cases[i]`; unlabeled cases are an
/// error.
pub fn error_analysis(cases: &[&DisputeCase], predicted: &[OutcomeLabel]) -> Result<ErrorAnalysisReport> {
    if cases.len() != predicted.len() {
        return Err(OdrError::InvalidInput(format!(
            "{} predictions for {} cases",
            predicted.len(),
            cases.len()
        )));
    }
    let mut groups: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut chars = [(0usize, 0usize); 2];
    let mut words: [BTreeMap<String, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let mut correct_total = 0;
    for (case, &p) in cases.iter().zip(predicted) {
        let truth = case
            .outcome
            .ok_or_else(|| OdrError::InvalidInput(format!("case {} has no outcome", case.case_id)))?;
        let ok = truth == p;
        correct_total += usize::from(ok);
        let g = groups.entry(appeal_group(case.claim.appeal_count)).or_default();
        g.0 += 1;
        g.1 += usize::from(ok);
        let slot = usize::from(!ok);
        chars[slot].0 += 1;
        chars[slot].1 += case.claim.agent_summary.chars().count();
        for w in tokenize(&case.claim.agent_summary) {
            if !is_stopword(&w) {
                *words[slot].entry(w).or_default() += 1;
            }
        }
    }
    let n = cases.len();
    let mean = |(k, total): (usize, usize)| (k > 0).then(|| total as f64 / k as f64);

    let mut vocab: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (w, &c) in &words[1] {
        vocab.entry(w).or_default().0 = c;
    }
    for (w, &c) in &words[0] {
        vocab.entry(w).or_default().1 = c;
    }
    let v = vocab.len() as f64;
    let total_incorrect: usize = words[1].values().sum();
    let total_correct: usize = words[0].values().sum();
    let mut terms: Vec<TermRatio> = vocab
        .iter()
        .filter(|(_, (i, c))| i + c >= MIN_TERM_FREQUENCY)
        .map(|(w, &(i, c))| {
            let fi = (i as f64 + 1.0) / (total_incorrect as f64 + v);
            let fc = (c as f64 + 1.0) / (total_correct as f64 + v);
            TermRatio {
                term: w.to_string(),
                count_incorrect: i,
                count_correct: c,
                ratio: fi / fc,
            }
        })
        .collect();
    terms.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then_with(|| a.term.cmp(&b.term)));

    Ok(ErrorAnalysisReport {
        n,
        accuracy: if n == 0 { 0.0 } else { correct_total as f64 / n as f64 },
        groups: ["0", "1", "2", "3+"]
            .iter()
            .filter_map(|g| {
                groups.get(g).map(|&(k, ok)| AppealGroup {
                    group: g.to_string(),
                    n: k,
                    share: k as f64 / n as f64,
                    accuracy: ok as f64 / k as f64,
                })
            })
            .collect(),
        mean_summary_chars_correct: mean(chars[0]),
        mean_summary_chars_incorrect: mean(chars[1]),
        terms,
    })
}
