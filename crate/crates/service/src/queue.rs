//! Arbitrator work queue: open cases, most uncertain first by default.

use serde::{Deserialize, Serialize};

use crate::store::{CaseRecord, CaseStatus, StoreState};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueOrder {
    /// Ascending `|p - 0.5|`; unscored cases go last.
    #[default]
    MostUncertain,
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConfidenceBand {
    Low,
    Medium,
    High,
}

impl ConfidenceBand {
    /// Low below 0.15 from the decision threshold, high from 0.35.
    pub fn of(p: f64) -> Self {
        match (p - 0.5).abs() {
            d if d < 0.15 => ConfidenceBand::Low,
            d if d < 0.35 => ConfidenceBand::Medium,
            _ => ConfidenceBand::High,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub case_id: String,
    pub p_seller_wins: Option<f64>,
    pub confidence: Option<ConfidenceBand>,
    pub status: CaseStatus,
}

/// Pending and appealed cases. The sort is stable over arrival order, so
/// equal keys keep insertion order.
pub fn build_queue(
    state: &StoreState,
    score: impl Fn(&CaseRecord) -> Option<f64>,
    order: QueueOrder,
    limit: Option<usize>,
) -> Vec<QueueEntry> {
    let mut open: Vec<&CaseRecord> = state
        .cases
        .values()
        .filter(|r| r.status != CaseStatus::Ruled)
        .collect();
    open.sort_by_key(|r| r.seq);
    let mut entries: Vec<QueueEntry> = open
        .into_iter()
        .map(|r| {
            let p = score(r);
            QueueEntry {
                case_id: r.case.case_id.clone(),
                p_seller_wins: p,
                confidence: p.map(ConfidenceBand::of),
                status: r.status,
            }
        })
        .collect();
    if order == QueueOrder::MostUncertain {
        let key = |e: &QueueEntry| e.p_seller_wins.map_or(f64::INFINITY, |p| (p - 0.5).abs());
        entries.sort_by(|a, b| key(a).total_cmp(&key(b)));
    }
    entries.truncate(limit.unwrap_or(usize::MAX));
    entries
}
