//! Planted outcome logic. Each rule adds a log-odds effect toward
//! `SellerWins` when all of its conditions hold on the serialized case, so
//! the manifest can be re-applied to any corpus file without access to the
//! generator's internal draws.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ClaimType, DisputeCase, Family, Party};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Condition {
    ClaimType(ClaimType),
    TrackingPresent(bool),
    SellerResponded(bool),
    RespondedBeforeEscalation(bool),
    FirstEscalatingParty(Party),
    PriceAtLeastCents(u64),
    TopRated(bool),
    FeedbackBelow(i64),
    SellerDisputesAtLeast(u32),
    BuyerDisputesAtLeast(u32),
    BuyerDisputesBelow(u32),
    BuyerTenureAtLeastDays(u32),
    CrossBorder(bool),
    /// Case-insensitive phrase match over all message bodies.
    TextContains(String),
}

impl Condition {
    pub fn holds(&self, case: &DisputeCase, text: &str) -> bool {
        let c = &case.claim;
        match self {
            Condition::ClaimType(t) => c.claim_type == *t,
            Condition::TrackingPresent(b) => case.transaction.shipping_tracking_present == *b,
            Condition::SellerResponded(b) => c.seller_responded == *b,
            Condition::RespondedBeforeEscalation(b) => c.seller_responded_before_escalation == *b,
            Condition::FirstEscalatingParty(p) => c.first_escalating_party == *p,
            Condition::PriceAtLeastCents(v) => case.transaction.item_price_cents >= *v,
            Condition::TopRated(b) => case.seller.top_rated == *b,
            Condition::FeedbackBelow(v) => case.seller.feedback_score < *v,
            Condition::SellerDisputesAtLeast(v) => case.seller.past_dispute_count >= *v,
            Condition::BuyerDisputesAtLeast(v) => case.buyer.past_dispute_count_last_year >= *v,
            Condition::BuyerDisputesBelow(v) => case.buyer.past_dispute_count_last_year < *v,
            Condition::BuyerTenureAtLeastDays(v) => case.buyer.tenure_days >= *v,
            Condition::CrossBorder(b) => (case.seller.country != case.buyer.country) == *b,
            Condition::TextContains(phrase) => text.contains(phrase.as_str()),
        }
    }
}

/// Continuous multiplier applied to a rule's effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scale {
    /// `ln(price / center)`.
    LogPrice { center_cents: u64 },
    /// `(tenure_days - center_days) / 365`.
    SellerTenureYears { center_days: u32 },
}

impl Scale {
    fn value(&self, case: &DisputeCase) -> f64 {
        match self {
            Scale::LogPrice { center_cents } => {
                ((case.transaction.item_price_cents.max(1)) as f64 / *center_cents as f64).ln()
            }
            Scale::SellerTenureYears { center_days } => {
                (case.seller.tenure_days as f64 - *center_days as f64) / 365.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub rule_id: String,
    pub family: Family,
    pub description: String,
    pub conditions: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    /// Additive log-odds toward `SellerWins`.
    pub effect: f64,
}

impl PlantedRule {
    pub fn contribution(&self, case: &DisputeCase, text: &str) -> f64 {
        if !self.conditions.iter().all(|c| c.holds(case, text)) {
            return 0.0;
        }
        match &self.scale {
            Some(s) => self.effect * s.value(case),
            None => self.effect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleManifest {
    pub version: u32,
    pub seed: u64,
    pub n_cases: usize,
    pub seller_win_rate_target: f64,
    pub noise_rate: f64,
    /// Relative label-flip rate per appeal count (last entry covers higher counts).
    pub appeal_flip_multipliers: Vec<f64>,
    pub family_signal_weights: BTreeMap<Family, f64>,
    pub intercept: f64,
    pub template_bank: String,
    pub rules: Vec<PlantedRule>,
}

impl RuleManifest {
    /// Planted log-odds of the case before label noise.
    pub fn score(&self, case: &DisputeCase) -> f64 {
        self.score_excluding(case, &[])
    }

    /// Score with every rule of the listed families removed.
    pub fn score_excluding(&self, case: &DisputeCase, dropped: &[Family]) -> f64 {
        let text = case.conversation.lowercase_text();
        self.intercept
            + self
                .rules
                .iter()
                .filter(|r| !dropped.contains(&r.family))
                .map(|r| r.contribution(case, &text))
                .sum::<f64>()
    }

    /// Noise-free label implied by the rules: seller wins iff the score is positive.
    pub fn clean_label(&self, case: &DisputeCase) -> u8 {
        u8::from(self.score(case) > 0.0)
    }

    /// Families carrying at least one rule with a non-zero effect.
    pub fn signal_families(&self) -> Vec<Family> {
        let mut out: Vec<Family> = self
            .rules
            .iter()
            .filter(|r| r.effect != 0.0)
            .map(|r| r.family)
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

pub const PHRASE_EMPTY_BOX: &str = "empty box";
pub const PHRASE_NO_MOVEMENT: &str = "tracking shows no movement";
pub const PHRASE_INCOMPLETE_ADDRESS: &str = "incomplete address";
pub const PHRASE_MEASUREMENTS: &str = "measurements in the listing";

/// Threshold shared by the seller-history rule and the generator's draw.
pub const SELLER_DISPUTE_THRESHOLD: u32 = 25;
pub const RISKY_BUYER_DISPUTES: u32 = 4;
pub const REPEAT_BUYER_DISPUTES: u32 = 2;
pub const LOW_FEEDBACK: i64 = 100;
pub const ESTABLISHED_BUYER_DAYS: u32 = 1095;
pub const HIGH_PRICE_CENTS: u64 = 15_000;
pub const PRICE_CENTER_CENTS: u64 = 4_000;
pub const TENURE_CENTER_DAYS: u32 = 1_095;

fn rule(
    id: &str,
    family: Family,
    description: &str,
    conditions: Vec<Condition>,
    effect: f64,
) -> PlantedRule {
    PlantedRule {
        rule_id: id.to_string(),
        family,
        description: description.to_string(),
        conditions,
        scale: None,
        effect,
    }
}

/// Default rule set before family weighting.
pub fn default_rules() -> Vec<PlantedRule> {
    use Condition::*;
    let text = |s: &str| TextContains(s.to_string());
    let mut rules = vec![
        rule(
            "claim.no_seller_response",
            Family::Claim,
            "seller never responded to the claim",
            vec![SellerResponded(false)],
            -1.4,
        ),
        rule(
            "claim.responded_before_escalation",
            Family::Claim,
            "seller responded before the claim was escalated",
            vec![RespondedBeforeEscalation(true)],
            0.5,
        ),
        rule(
            "claim.seller_escalated_first",
            Family::Claim,
            "seller was the first escalating party",
            vec![FirstEscalatingParty(Party::Seller)],
            0.8,
        ),
        rule(
            "transaction.inr_without_tracking",
            Family::Transaction,
            "item not received and no shipping tracking",
            vec![ClaimType(crate::domain::ClaimType::Inr), TrackingPresent(false)],
            -1.6,
        ),
        rule(
            "transaction.inr_with_tracking",
            Family::Transaction,
            "item not received but shipping tracking exists",
            vec![ClaimType(crate::domain::ClaimType::Inr), TrackingPresent(true)],
            0.7,
        ),
        rule(
            "transaction.snad_expensive",
            Family::Transaction,
            "not-as-described claim on an expensive item",
            vec![
                ClaimType(crate::domain::ClaimType::Snad),
                PriceAtLeastCents(HIGH_PRICE_CENTS),
            ],
            -0.6,
        ),
        rule(
            "claim_seller.top_rated",
            Family::ClaimSeller,
            "seller is top-rated",
            vec![TopRated(true)],
            0.9,
        ),
        rule(
            "claim_seller.low_feedback",
            Family::ClaimSeller,
            "seller feedback score is low",
            vec![FeedbackBelow(LOW_FEEDBACK)],
            -0.7,
        ),
        rule(
            "claim_seller.dispute_history",
            Family::ClaimSeller,
            "seller has a long dispute history",
            vec![SellerDisputesAtLeast(SELLER_DISPUTE_THRESHOLD)],
            -1.0,
        ),
        rule(
            "claim_buyer.frequent_disputer",
            Family::ClaimBuyer,
            "buyer opened many disputes in the last year",
            vec![BuyerDisputesAtLeast(RISKY_BUYER_DISPUTES)],
            1.1,
        ),
        rule(
            "claim_buyer.established",
            Family::ClaimBuyer,
            "buyer account is long-established",
            vec![BuyerTenureAtLeastDays(ESTABLISHED_BUYER_DAYS)],
            -0.6,
        ),
        rule(
            "seller_data.cross_border_inr",
            Family::SellerData,
            "cross-border shipment that never arrived",
            vec![CrossBorder(true), ClaimType(crate::domain::ClaimType::Inr)],
            -0.5,
        ),
        rule(
            "textual.empty_box_repeat_buyer",
            Family::Textual,
            "empty-box complaint from a repeat disputer",
            vec![text(PHRASE_EMPTY_BOX), BuyerDisputesAtLeast(REPEAT_BUYER_DISPUTES)],
            2.0,
        ),
        rule(
            "textual.empty_box_first_time",
            Family::Textual,
            "empty-box complaint from an occasional disputer",
            vec![text(PHRASE_EMPTY_BOX), BuyerDisputesBelow(REPEAT_BUYER_DISPUTES)],
            -0.6,
        ),
        rule(
            "textual.no_tracking_movement",
            Family::Textual,
            "tracking shows no movement",
            vec![text(PHRASE_NO_MOVEMENT)],
            -1.2,
        ),
        rule(
            "textual.incomplete_address",
            Family::Textual,
            "seller reports an incomplete address",
            vec![text(PHRASE_INCOMPLETE_ADDRESS)],
            1.5,
        ),
        rule(
            "textual.measurements_listed",
            Family::Textual,
            "seller points to measurements in the listing",
            vec![text(PHRASE_MEASUREMENTS)],
            1.0,
        ),
    ];
    rules.push(PlantedRule {
        rule_id: "transaction.log_price".into(),
        family: Family::Transaction,
        description: "pricier items lean toward the buyer".into(),
        conditions: vec![],
        scale: Some(Scale::LogPrice {
            center_cents: PRICE_CENTER_CENTS,
        }),
        effect: -0.25,
    });
    rules.push(PlantedRule {
        rule_id: "claim_seller.tenure".into(),
        family: Family::ClaimSeller,
        description: "longer seller tenure leans toward the seller".into(),
        conditions: vec![],
        scale: Some(Scale::SellerTenureYears {
            center_days: TENURE_CENTER_DAYS,
        }),
        effect: 0.15,
    });
    rules
}
