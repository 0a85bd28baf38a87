//! Politeness in conversations: first-message correlations with winning and
//! strategy frequencies over normalized conversation position.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::politeness::{detect_politeness, Strategy};
use crate::domain::{DisputeCase, Party, Phase, SellerType};
use crate::error::{OdrError, Result};

pub const SIGNIFICANCE: f64 = 0.005;
pub const MIN_SUPPORT: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub strategy: Strategy,
    /// Pearson correlation of the indicator with the role winning.
    pub correlation: f64,
    /// Two-sided, from the t distribution with `n - 2` degrees of freedom.
    pub p_value: f64,
    pub significant: bool,
    /// Set when the indicator never varies; correlation is then 0.
    pub constant: bool,
    pub n_present: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub role: Party,
    /// Cases in which the role wrote a first during-dispute message.
    pub n: usize,
    /// Cases without such a message.
    pub excluded: usize,
    pub rows: Vec<CorrelationRow>,
}

/// Pearson correlation and two-sided t-approximation p-value. `None` when
/// either variable is constant.
pub fn pearson_with_p(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        2.0 * dist.sf(t.abs())
    };
    Some((r, p))
}

/// Correlates each strategy in `role`'s first during-dispute message with
/// `role` winning, over labeled cases with C2C sellers.
pub fn first_message_correlation(corpus: &[DisputeCase], role: Party) -> Result<CorrelationReport> {
    let mut indicators: Vec<Vec<f64>> = vec![Vec::new(); Strategy::ALL.len()];
    let mut wins = Vec::new();
    let mut excluded = 0;
    for case in corpus {
        let Some(outcome) = case.outcome else { continue };
        if case.seller.seller_type != SellerType::C2C {
            continue;
        }
        let Some(msg) = case.conversation.first_by(role, Phase::DuringDispute) else {
            excluded += 1;
            continue;
        };
        let v = detect_politeness(&msg.body);
        for (k, s) in Strategy::ALL.into_iter().enumerate() {
            indicators[k].push(f64::from(u8::from(v.get(s))));
        }
        wins.push(f64::from(u8::from(outcome.winner() == role)));
    }
    let won = wins.iter().filter(|w| **w == 1.0).count();
    if won == 0 || won == wins.len() {
        return Err(OdrError::InvalidInput(format!(
            "correlation needs both outcomes among {} C2C cases",
            wins.len()
        )));
    }
    let rows = Strategy::ALL
        .into_iter()
        .zip(&indicators)
        .map(|(strategy, x)| {
            let n_present = x.iter().filter(|v| **v == 1.0).count();
            match pearson_with_p(x, &wins) {
                Some((correlation, p_value)) => CorrelationRow {
                    strategy,
                    correlation,
                    p_value,
                    significant: p_value < SIGNIFICANCE,
                    constant: false,
                    n_present,
                },
                None => CorrelationRow {
                    strategy,
                    correlation: 0.0,
                    p_value: 1.0,
                    significant: false,
                    constant: true,
                    n_present,
                },
            }
        })
        .collect();
    Ok(CorrelationReport {
        role,
        n: wins.len(),
        excluded,
        rows,
    })
}

/// Bin of message `i` in an `n`-message conversation split into `m` bins.
pub fn position_bin(i: usize, n: usize, m: usize) -> usize {
    i * m / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub strategy: Strategy,
    pub role: Party,
    /// Whether the message's author won the dispute.
    pub author_won: bool,
    pub bin: usize,
    /// Messages in the cell showing the strategy.
    pub count: usize,
    /// Messages in the cell.
    pub support: usize,
    /// `count / support`, 0 for empty cells.
    pub frequency: f64,
    pub low_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub bins: usize,
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryReport {
    pub fn cell(&self, strategy: Strategy, role: Party, author_won: bool, bin: usize) -> Option<&TrajectoryRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.role == role && r.author_won == author_won && r.bin == bin)
    }
}

/// Strategy frequency by (role, author won, position bin) over all messages
/// of labeled cases.
pub fn trajectories(corpus: &[DisputeCase], m: usize) -> Result<TrajectoryReport> {
    if m < 2 {
        return Err(OdrError::Config(format!("trajectories need at least 2 bins, got {m}")));
    }
    let slot = |role: Party, won: bool| (role as usize) * 2 + usize::from(won);
    // [role/won slot][bin] -> (support, per-strategy counts)
    let mut support = vec![vec![0usize; m]; 4];
    let mut counts = vec![vec![[0usize; 21]; m]; 4];
    for case in corpus {
        let Some(outcome) = case.outcome else { continue };
        let n = case.conversation.len();
        for (i, msg) in case.conversation.messages.iter().enumerate() {
            let b = position_bin(i, n, m);
            let s = slot(msg.author, outcome.winner() == msg.author);
            support[s][b] += 1;
            let v = detect_politeness(&msg.body);
            for (k, st) in Strategy::ALL.into_iter().enumerate() {
                counts[s][b][k] += usize::from(v.get(st));
            }
        }
    }
    let mut rows = Vec::with_capacity(21 * 4 * m);
    for (k, strategy) in Strategy::ALL.into_iter().enumerate() {
        for role in [Party::Buyer, Party::Seller] {
            for won in [false, true] {
                let s = slot(role, won);
                for bin in 0..m {
                    let (count, sup) = (counts[s][bin][k], support[s][bin]);
                    rows.push(TrajectoryRow {
                        strategy,
                        role,
                        author_won: won,
                        bin,
                        count,
                        support: sup,
                        frequency: if sup == 0 { 0.0 } else { count as f64 / sup as f64 },
                        low_support: sup < MIN_SUPPORT,
                    });
                }
            }
        }
    }
    Ok(TrajectoryReport { bins: m, rows })
}
