//! Synthetic dispute corpora with planted outcome logic.
//!
//! Each case is drawn from its own seed stream `(seed, case index)`, labels
//! come from re-applying the [`RuleManifest`] to the finished case, and the
//! intercept is calibrated on a separate pilot stream so the seller-win rate
//! after label noise matches the configured target.

mod rules;
mod templates;
mod timeline;

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    BuyerProfile, ClaimRecord, ClaimType, Conversation, DisputeCase, Family, OutcomeLabel, Party,
    SellerProfile, SellerType, TransactionRecord,
};
use crate::error::{OdrError, Result};
use crate::rng::{self, Rng};

pub use rules::{
    default_rules, Condition, PlantedRule, RuleManifest, Scale, PHRASE_EMPTY_BOX,
    PHRASE_INCOMPLETE_ADDRESS, PHRASE_MEASUREMENTS, PHRASE_NO_MOVEMENT,
};
pub use templates::DEFAULT_BANK;
pub use timeline::{
    generate_timelines, solve_churn_params, ChurnParams, ChurnTarget, DISPUTE_WEEK, LOSER_TARGET,
    WEEKS, WINDOW, WINNER_TARGET,
};

pub const MANIFEST_VERSION: u32 = 1;
const PILOT_SIZE: usize = 20_000;

const STREAM_CASE: u64 = 0xca5e;
const STREAM_PILOT: u64 = 0x9170;
const STREAM_LABEL: u64 = 0x1abe;

/// Appeal-count distribution for 0, 1, 2, 3 and 4 appeals.
const APPEAL_PROBS: [f64; 5] = [0.80, 0.14, 0.04, 0.015, 0.005];
/// Cases appealed more often were harder to call; their labels are noisier.
const APPEAL_FLIP_MULTIPLIERS: [f64; 4] = [0.6, 2.0, 3.0, 4.0];

/// Log-normal conversation length: median 4, mean about 8.6.
const LENGTH_SIGMA: f64 = 1.2374;
const MAX_LENGTH: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_cases: usize,
    pub seed: u64,
    pub seller_win_rate_target: f64,
    pub noise_rate: f64,
    /// Multiplier on every planted rule of a family; missing families weigh 1.
    pub family_signal_weights: BTreeMap<Family, f64>,
    pub template_bank: String,
    pub category_count: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_cases: 20_000,
            seed: 0,
            seller_win_rate_target: 0.596,
            noise_rate: 0.05,
            family_signal_weights: Family::ALL.iter().map(|&f| (f, 1.0)).collect(),
            template_bank: DEFAULT_BANK.to_string(),
            category_count: 50,
        }
    }
}

impl GeneratorConfig {
    pub fn weight(&self, family: Family) -> f64 {
        self.family_signal_weights
            .get(&family)
            .copied()
            .unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("seller_win_rate_target", self.seller_win_rate_target),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(OdrError::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        for (f, w) in &self.family_signal_weights {
            if !(0.0..=1.0).contains(w) {
                return Err(OdrError::Config(format!(
                    "weight for family {f} must be in [0, 1], got {w}"
                )));
            }
        }
        let signalling = default_rules()
            .iter()
            .map(|r| r.family)
            .filter(|&f| self.weight(f) > 0.0)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        if signalling < 3 {
            return Err(OdrError::Config(
                "at least 3 signal-bearing families need a positive weight".into(),
            ));
        }
        if self.template_bank != DEFAULT_BANK {
            return Err(OdrError::Config(format!(
                "unknown template bank `{}`",
                self.template_bank
            )));
        }
        if self.category_count == 0 {
            return Err(OdrError::Config("category_count must be positive".into()));
        }
        Ok(())
    }

    fn weighted_rules(&self) -> Vec<PlantedRule> {
        default_rules()
            .into_iter()
            .map(|mut r| {
                r.effect *= self.weight(r.family);
                r
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tier {
    Low,
    Mid,
    High,
}

const COUNTRIES: &[(&str, &str, f64)] = &[
    ("US", "en_US", 0.50),
    ("GB", "en_GB", 0.15),
    ("DE", "de_DE", 0.12),
    ("AU", "en_AU", 0.08),
    ("CA", "en_CA", 0.08),
    ("CN", "zh_CN", 0.07),
];

fn weighted_index(r: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = r.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn log_uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + r.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn normal(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws a case without its outcome or summary, plus the scene that rendered it.
fn draw_case(cfg: &GeneratorConfig, stream: u64, index: usize) -> (DisputeCase, templates::Scene) {
    let r = &mut rng::derive(cfg.seed, &[stream, index as u64]);

    let claim_type = if r.random_bool(0.55) {
        ClaimType::Inr
    } else {
        ClaimType::Snad
    };
    let seller_type = if r.random_bool(0.45) {
        SellerType::B2C
    } else {
        SellerType::C2C
    };

    // Seller quality drives tier, history, responsiveness and tone.
    let z_s = normal(r) + if seller_type == SellerType::B2C { 0.4 } else { 0.0 };
    let tier = if z_s > 0.9 {
        Tier::High
    } else if z_s < -0.5 {
        Tier::Low
    } else {
        Tier::Mid
    };
    let feedback_score = match tier {
        Tier::Low => r.random_range(-20..rules::LOW_FEEDBACK),
        Tier::Mid => r.random_range(rules::LOW_FEEDBACK..1000),
        Tier::High => log_uniform(r, 1000.0, 25_000.0) as i64,
    };
    let seller_volume = match tier {
        Tier::Low => log_uniform(r, 1.0, 500.0),
        Tier::Mid => log_uniform(r, 500.0, 5000.0),
        Tier::High => log_uniform(r, 5000.0, 300_000.0),
    } as u64;
    let seller_tenure = (6.6 + 0.6 * z_s + 0.7 * normal(r)).exp().clamp(1.0, 9000.0) as u32;
    let problem_seller = r.random_bool(sigmoid(-2.2 - 0.7 * z_s));
    let past_dispute_count = if problem_seller {
        r.random_range(rules::SELLER_DISPUTE_THRESHOLD..=200)
    } else {
        let cap = (1 + seller_volume / 200).min(rules::SELLER_DISPUTE_THRESHOLD as u64 - 1);
        r.random_range(0..=cap) as u32
    };
    let info_last_modified_days_ago = if problem_seller {
        r.random_range(0..60)
    } else {
        r.random_range(0..2500)
    };
    let credit_card_on_file = r.random_bool(match tier {
        Tier::High => 0.9,
        Tier::Mid => 0.7,
        Tier::Low => 0.4,
    });
    let weights: Vec<f64> = COUNTRIES.iter().map(|c| c.2).collect();
    let sc = weighted_index(r, &weights);
    let seller_country = COUNTRIES[sc].0.to_string();
    let site_locale = if r.random_bool(0.9) {
        COUNTRIES[sc].1
    } else {
        COUNTRIES[r.random_range(0..COUNTRIES.len())].1
    }
    .to_string();

    // Buyer trust.
    let z_b = normal(r);
    let risky = z_b < -1.05;
    let buyer_disputes = if risky {
        log_uniform(r, rules::RISKY_BUYER_DISPUTES as f64, 31.0) as u32
    } else {
        weighted_index(r, &[0.6, 0.2, 0.12, 0.08]) as u32
    };
    let buyer_tenure = (6.3 + 0.5 * z_b + normal(r)).exp().clamp(1.0, 7000.0) as u32;
    let established = buyer_tenure >= rules::ESTABLISHED_BUYER_DAYS;
    let buyer_volume = if established {
        r.random_range(200..5000)
    } else {
        r.random_range(0..200)
    };
    let buyer_country = if r.random_bool(0.8) {
        seller_country.clone()
    } else {
        COUNTRIES[weighted_index(r, &weights)].0.to_string()
    };
    let tax_status = ["individual", "business", "exempt"][weighted_index(r, &[0.85, 0.1, 0.05])];

    // Transaction.
    let price = LogNormal::new((rules::PRICE_CENTER_CENTS as f64).ln(), 1.0)
        .expect("valid lognormal")
        .sample(r)
        .clamp(99.0, 500_000.0) as u64;
    let category = (cfg.category_count as f64 * r.random::<f64>().powi(2)) as usize;
    let category = category.min(cfg.category_count as usize - 1);
    let tracking_p: f64 = match seller_type {
        SellerType::B2C => 0.95,
        SellerType::C2C => 0.4,
    } + match tier {
        Tier::High => 0.3,
        Tier::Mid => 0.0,
        Tier::Low => -0.4,
    };
    let tracking = r.random_bool(tracking_p.clamp(0.02, 0.98));
    let auction = r.random_bool(match seller_type {
        SellerType::B2C => 0.1,
        SellerType::C2C => 0.4,
    });
    let date = NaiveDate::from_ymd_opt(2015, 1, 1)
        .expect("valid date")
        .checked_add_days(Days::new(r.random_range(0..730)))
        .expect("in range");

    // Claim process.
    let seller_escalated_first = r.random_bool(0.15);
    let seller_responded = seller_escalated_first
        || r.random_bool(match tier {
            Tier::High => 0.95,
            Tier::Mid => 0.82,
            Tier::Low => 0.55,
        });
    let responded_before = seller_responded && r.random_bool(0.5);
    let first = if seller_escalated_first {
        Party::Seller
    } else {
        Party::Buyer
    };
    let recent = if r.random_bool(0.8) {
        first
    } else {
        match first {
            Party::Buyer => Party::Seller,
            Party::Seller => Party::Buyer,
        }
    };
    let appeal_count = weighted_index(r, &APPEAL_PROBS) as u32;

    let inr = claim_type == ClaimType::Inr;
    let snad = !inr;
    let empty_box = snad && r.random_bool(if risky { 0.25 } else { 0.06 });
    let no_movement = inr && tracking && r.random_bool(0.2);
    let incomplete_address = inr && seller_responded && r.random_bool(0.1);
    let measurements = snad && seller_responded && r.random_bool(0.2);

    let length = LogNormal::new(4f64.ln(), LENGTH_SIGMA)
        .expect("valid lognormal")
        .sample(r)
        .round()
        .clamp(1.0, MAX_LENGTH as f64) as usize;
    let seller_style = match tier {
        Tier::High => templates::Style { polite: 0.65, harsh: 0.08 },
        Tier::Mid => templates::Style { polite: 0.55, harsh: 0.12 },
        Tier::Low => templates::Style { polite: 0.45, harsh: 0.18 },
    };
    let buyer_style = if risky {
        templates::Style { polite: 0.45, harsh: 0.22 }
    } else {
        templates::Style { polite: 0.55, harsh: 0.14 }
    };
    let scene = templates::Scene {
        claim_type,
        item: templates::item_for_category(category),
        tracking,
        seller_responded,
        seller_escalated_first,
        empty_box,
        no_movement,
        incomplete_address,
        measurements,
        buyer: buyer_style,
        seller: seller_style,
        length,
        start_date: date,
    };
    let messages = templates::conversation(r, &scene);

    let case = DisputeCase {
        case_id: format!("C{index:06}"),
        claim: ClaimRecord {
            claim_type,
            first_escalating_party: first,
            recent_escalating_party: recent,
            seller_responded,
            seller_responded_before_escalation: responded_before,
            appeal_count,
            agent_summary: String::new(),
        },
        transaction: TransactionRecord {
            item_price_cents: price,
            category_id: format!("cat-{category:03}"),
            shipping_tracking_present: tracking,
            auction,
            transaction_date: date,
        },
        seller: SellerProfile {
            tenure_days: seller_tenure,
            seller_type,
            feedback_score,
            past_dispute_count,
            top_rated: tier == Tier::High,
            account_confirmed: !problem_seller,
            country: seller_country,
            site_locale,
            info_last_modified_days_ago,
            credit_card_on_file,
            transaction_volume: seller_volume,
        },
        buyer: BuyerProfile {
            tenure_days: buyer_tenure,
            past_dispute_count_last_year: buyer_disputes,
            country: buyer_country,
            anonymous_email: risky,
            tax_status: tax_status.to_string(),
            transaction_volume: buyer_volume,
        },
        conversation: Conversation { messages },
        outcome: None,
    };
    (case, scene)
}

/// Intercept placing the `1 - r` quantile of pilot scores at zero, where
/// `r` is the clean seller-win rate that noise turns into the target.
fn calibrate_intercept(cfg: &GeneratorConfig, rules: &[PlantedRule]) -> f64 {
    let probe = RuleManifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        n_cases: 0,
        seller_win_rate_target: cfg.seller_win_rate_target,
        noise_rate: cfg.noise_rate,
        appeal_flip_multipliers: APPEAL_FLIP_MULTIPLIERS.to_vec(),
        family_signal_weights: BTreeMap::new(),
        intercept: 0.0,
        template_bank: cfg.template_bank.clone(),
        rules: rules.to_vec(),
    };
    let mut scores: Vec<f64> = (0..PILOT_SIZE)
        .into_par_iter()
        .map(|j| probe.score(&draw_case(cfg, STREAM_PILOT, j).0))
        .collect();
    scores.sort_by(f64::total_cmp);
    let denom = 1.0 - 2.0 * cfg.noise_rate;
    let clean_rate = if denom.abs() < 1e-9 {
        0.5
    } else {
        ((cfg.seller_win_rate_target - cfg.noise_rate) / denom).clamp(0.0, 1.0)
    };
    let k = ((1.0 - clean_rate) * PILOT_SIZE as f64).round() as usize;
    if k == 0 {
        return -scores[0] + 1.0;
    }
    if k >= PILOT_SIZE {
        return -scores[PILOT_SIZE - 1] - 1.0;
    }
    -0.5 * (scores[k - 1] + scores[k])
}

fn flip_probability(noise_rate: f64, appeals: u32) -> f64 {
    let mean: f64 = APPEAL_PROBS
        .iter()
        .enumerate()
        .map(|(a, p)| p * APPEAL_FLIP_MULTIPLIERS[a.min(APPEAL_FLIP_MULTIPLIERS.len() - 1)])
        .sum();
    let m = APPEAL_FLIP_MULTIPLIERS[(appeals as usize).min(APPEAL_FLIP_MULTIPLIERS.len() - 1)];
    (noise_rate * m / mean).min(1.0)
}

/// Generates `n_cases` labeled cases and the manifest that explains their labels.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<(Vec<DisputeCase>, RuleManifest)> {
    cfg.validate()?;
    let rules = cfg.weighted_rules();
    let intercept = calibrate_intercept(cfg, &rules);
    let manifest = RuleManifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        n_cases: cfg.n_cases,
        seller_win_rate_target: cfg.seller_win_rate_target,
        noise_rate: cfg.noise_rate,
        appeal_flip_multipliers: APPEAL_FLIP_MULTIPLIERS.to_vec(),
        family_signal_weights: Family::ALL.iter().map(|&f| (f, cfg.weight(f))).collect(),
        intercept,
        template_bank: cfg.template_bank.clone(),
        rules,
    };
    let cases = (0..cfg.n_cases)
        .into_par_iter()
        .map(|i| {
            let (mut case, scene) = draw_case(cfg, STREAM_CASE, i);
            let clean = manifest.clean_label(&case) == 1;
            let r = &mut rng::derive(cfg.seed, &[STREAM_LABEL, i as u64]);
            let flipped = r.random_bool(flip_probability(cfg.noise_rate, case.claim.appeal_count));
            let outcome = OutcomeLabel::from_positive(clean != flipped);
            case.claim.agent_summary = templates::agent_summary(
                r,
                &scene,
                outcome.winner(),
                case.claim.appeal_count,
                flipped,
            );
            case.outcome = Some(outcome);
            case
        })
        .collect();
    Ok((cases, manifest))
}

pub fn write_manifest(manifest: &RuleManifest, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json + "\n").map_err(|e| OdrError::io(path, e))
}

pub fn read_manifest(path: impl AsRef<std::path::Path>) -> Result<RuleManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| OdrError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| OdrError::Parse {
        line: e.line(),
        field: "manifest".into(),
        message: e.to_string(),
    })
}
