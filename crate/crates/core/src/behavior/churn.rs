//! Purchasing before and after a dispute, split by who won.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{BuyerTimeline, DisputeCase, OutcomeLabel};
use crate::error::{OdrError, Result};
use crate::synth::{DISPUTE_WEEK, WEEKS, WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnRow {
    /// `true` for buyers who won the dispute.
    pub buyer_won: bool,
    pub n: usize,
    pub mean_pre: f64,
    pub mean_post: f64,
    /// `mean_post / mean_pre`.
    pub ratio: f64,
    /// Share of buyers with no purchase after the dispute.
    pub zero_post_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnReport {
    /// Buyers who lost, then buyers who won; a condition with no buyers is
    /// omitted.
    pub rows: Vec<ChurnRow>,
    pub included: usize,
    /// Excluded timelines by reason.
    pub excluded: BTreeMap<String, usize>,
}

impl ChurnReport {
    pub fn row(&self, buyer_won: bool) -> Option<&ChurnRow> {
        self.rows.iter().find(|r| r.buyer_won == buyer_won)
    }

    pub fn excluded_total(&self) -> usize {
        self.excluded.values().sum()
    }
}

/// Purchases in the seven weeks before and after the dispute week, when the
/// timeline passes the filter: at least 15 weeks and a single dispute in
/// week 8.
pub fn pre_post(t: &BuyerTimeline) -> std::result::Result<(u64, u64), &'static str> {
    if t.weekly_transaction_counts.len() < WEEKS {
        return Err("fewer than 15 weeks");
    }
    if t.dispute_week_indices != [DISPUTE_WEEK] {
        return Err("not a single dispute in week 8");
    }
    let d = DISPUTE_WEEK as usize;
    let sum = |r: std::ops::Range<usize>| t.weekly_transaction_counts[r].iter().map(|&c| u64::from(c)).sum();
    Ok((sum(d - 1 - WINDOW..d - 1), sum(d..d + WINDOW)))
}

/// Post/pre ratio of one buyer; `None` without pre-dispute purchases.
pub fn individual_ratio(t: &BuyerTimeline) -> Option<f64> {
    let (pre, post) = pre_post(t).ok()?;
    (pre > 0).then(|| post as f64 / pre as f64)
}

/// Outcome of each buyer's dispute, keyed by buyer id.
pub fn buyer_outcomes(corpus: &[DisputeCase]) -> HashMap<String, OutcomeLabel> {
    corpus
        .iter()
        .filter_map(|c| c.outcome.map(|o| (c.buyer_id(), o)))
        .collect()
}

pub fn soft_churn(timelines: &[BuyerTimeline], outcomes: &HashMap<String, OutcomeLabel>) -> Result<ChurnReport> {
    // [lost, won] -> (n, pre total, post total, zero-post count)
    let mut acc = [(0usize, 0u64, 0u64, 0usize); 2];
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    for t in timelines {
        let Some(outcome) = outcomes.get(&t.buyer_id) else {
            *excluded.entry("no labeled dispute".into()).or_default() += 1;
            continue;
        };
        match pre_post(t) {
            Ok((pre, post)) => {
                let a = &mut acc[usize::from(*outcome == OutcomeLabel::BuyerWins)];
                a.0 += 1;
                a.1 += pre;
                a.2 += post;
                a.3 += usize::from(post == 0);
            }
            Err(reason) => *excluded.entry(reason.into()).or_default() += 1,
        }
    }
    let included = acc[0].0 + acc[1].0;
    if included == 0 {
        return Err(OdrError::InvalidInput("no timeline passes the churn filter".into()));
    }
    let rows = acc
        .iter()
        .enumerate()
        .filter(|(_, a)| a.0 > 0)
        .map(|(won, &(n, pre, post, zero))| {
            let nf = n as f64;
            ChurnRow {
                buyer_won: won == 1,
                n,
                mean_pre: pre as f64 / nf,
                mean_post: post as f64 / nf,
                ratio: if pre == 0 { 0.0 } else { post as f64 / pre as f64 },
                zero_post_rate: zero as f64 / nf,
            }
        })
        .collect();
    Ok(ChurnReport {
        rows,
        included,
        excluded,
    })
}
