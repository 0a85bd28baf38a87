//! Weekly purchase histories around each dispute.
//!
//! A buyer's base weekly rate is Gamma-distributed. After the dispute the
//! buyer either goes dormant or keeps buying at a scaled rate; the dormancy
//! probability and rate multiplier are solved per outcome so that the
//! expected post/pre ratio of means and the zero-purchase share hit their
//! targets exactly.

use rand_distr::{Distribution, Gamma, Poisson};

use crate::domain::{BuyerTimeline, DisputeCase, OutcomeLabel};
use crate::error::{OdrError, Result};
use crate::rng;

pub const WEEKS: usize = 15;
pub const DISPUTE_WEEK: u32 = 8;
pub const WINDOW: usize = 7;

const RATE_SHAPE: f64 = 2.0;
const RATE_SCALE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChurnTarget {
    /// Expected post-window total over pre-window total.
    pub ratio: f64,
    /// Share of buyers with no purchase in the post window.
    pub zero_post_rate: f64,
}

pub const LOSER_TARGET: ChurnTarget = ChurnTarget {
    ratio: 0.82,
    zero_post_rate: 0.12,
};
pub const WINNER_TARGET: ChurnTarget = ChurnTarget {
    ratio: 0.86,
    zero_post_rate: 0.09,
};

/// Dormancy probability and active-rate multiplier for a target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnParams {
    pub dormant: f64,
    pub multiplier: f64,
}

/// `P(no purchase in the window)` for a non-dormant buyer: the Gamma
/// Laplace transform at `7 * multiplier`.
fn active_zero_rate(multiplier: f64) -> f64 {
    (1.0 + WINDOW as f64 * multiplier * RATE_SCALE).powf(-RATE_SHAPE)
}

pub fn solve_churn_params(target: ChurnTarget) -> Result<ChurnParams> {
    let zero = |m: f64| {
        let active = target.ratio / m;
        (1.0 - active) + active * active_zero_rate(m)
    };
    let (mut lo, mut hi) = (target.ratio, 1e6);
    if !(zero(lo) < target.zero_post_rate && target.zero_post_rate < zero(hi)) {
        return Err(OdrError::Config(format!(
            "churn target {target:?} is not reachable"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zero(mid) < target.zero_post_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = 0.5 * (lo + hi);
    Ok(ChurnParams {
        dormant: 1.0 - target.ratio / m,
        multiplier: m,
    })
}

const STREAM_TIMELINE: u64 = 0x71e1;

/// One 15-week timeline per labeled case, dispute in week 8.
pub fn generate_timelines(seed: u64, corpus: &[DisputeCase]) -> Result<Vec<BuyerTimeline>> {
    let losers = solve_churn_params(LOSER_TARGET)?;
    let winners = solve_churn_params(WINNER_TARGET)?;
    let gamma = Gamma::new(RATE_SHAPE, RATE_SCALE).expect("valid gamma");
    let mut out = Vec::with_capacity(corpus.len());
    for (i, case) in corpus.iter().enumerate() {
        let Some(outcome) = case.outcome else { continue };
        let params = match outcome {
            OutcomeLabel::SellerWins => losers,
            OutcomeLabel::BuyerWins => winners,
        };
        let mut r = rng::derive(seed, &[STREAM_TIMELINE, i as u64]);
        let rate: f64 = gamma.sample(&mut r);
        let dormant = rand::Rng::random_bool(&mut r, params.dormant);
        let mut counts = Vec::with_capacity(WEEKS);
        for week in 1..=WEEKS as u32 {
            let mean = if week <= DISPUTE_WEEK {
                rate
            } else if dormant {
                0.0
            } else {
                rate * params.multiplier
            };
            counts.push(poisson(&mut r, mean));
        }
        out.push(BuyerTimeline {
            buyer_id: case.buyer_id(),
            weekly_transaction_counts: counts,
            dispute_week_indices: vec![DISPUTE_WEEK],
        });
    }
    Ok(out)
}

fn poisson(r: &mut rng::Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let v: f64 = Poisson::new(mean).expect("positive mean").sample(r);
    v as u32
}
