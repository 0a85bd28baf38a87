//! Message and summary templates for generated conversations.
//!
//! Fact phrases used by the planted text rules appear only in the sentences
//! that plant them, so a rule fires exactly when its sentence was emitted.

use chrono::NaiveDate;
use rand::Rng as _;

use crate::domain::{ClaimType, Message, Party, Phase};
use crate::rng::Rng;
use crate::synth::rules::{
    PHRASE_EMPTY_BOX, PHRASE_INCOMPLETE_ADDRESS, PHRASE_MEASUREMENTS, PHRASE_NO_MOVEMENT,
};

pub const DEFAULT_BANK: &str = "default";

const ITEMS: &[&str] = &[
    "phone case",
    "watch",
    "jacket",
    "camera lens",
    "pair of shoes",
    "lamp",
    "book",
    "headphones",
    "necklace",
    "toy car",
    "handbag",
    "keyboard",
];

const DEFECTS: &[&str] = &[
    "broken",
    "scratched",
    "in the wrong size",
    "in the wrong color",
    "damaged",
    "missing parts",
];

fn pick<'a>(r: &mut Rng, options: &[&'a str]) -> &'a str {
    options[r.random_range(0..options.len())]
}

pub fn item_for_category(category_index: usize) -> &'static str {
    ITEMS[category_index % ITEMS.len()]
}

/// How a participant tends to write.
#[derive(Debug, Clone, Copy)]
pub struct Style {
    /// Probability of polite markers (greetings, thanks, apologies, hedged requests).
    pub polite: f64,
    /// Probability of negative or blunt wording.
    pub harsh: f64,
}

/// Facts a conversation must express.
#[derive(Debug, Clone)]
pub struct Scene {
    pub claim_type: ClaimType,
    pub item: &'static str,
    pub tracking: bool,
    pub seller_responded: bool,
    pub seller_escalated_first: bool,
    pub empty_box: bool,
    pub no_movement: bool,
    pub incomplete_address: bool,
    pub measurements: bool,
    pub buyer: Style,
    pub seller: Style,
    pub length: usize,
    pub start_date: NaiveDate,
}

struct Draft {
    author: Party,
    phase: Phase,
    body: String,
}

fn greeting(r: &mut Rng, style: Style) -> Option<&'static str> {
    r.random_bool(style.polite * 0.7)
        .then(|| pick(r, &["Hi,", "Hello,", "Good morning,", "Hi there,"]))
}

fn join(parts: Vec<String>) -> String {
    parts
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn buyer_opening(r: &mut Rng, s: &Scene) -> String {
    let mut parts = Vec::new();
    if let Some(g) = greeting(r, s.buyer) {
        parts.push(g.to_string());
    }
    let item = s.item;
    let core = match s.claim_type {
        ClaimType::Inr => match r.random_range(0..4) {
            0 => format!("I have not received my {item} yet."),
            1 => format!("My {item} never arrived."),
            2 => format!(
                "It has been {} days and my {item} still has not arrived.",
                r.random_range(10..40)
            ),
            _ => format!("The {item} I ordered never showed up."),
        },
        ClaimType::Snad => match r.random_range(0..4) {
            0 => format!("The {item} I received is not as described."),
            1 => format!("The {item} does not match the description."),
            2 => format!("The {item} arrived {}.", pick(r, DEFECTS)),
            _ => format!("This {item} is not what was shown in the photos."),
        },
    };
    parts.push(core);
    if s.empty_box {
        parts.push(if r.random_bool(0.5) {
            format!("When I opened the package it was an {PHRASE_EMPTY_BOX}.")
        } else {
            format!("I got an {PHRASE_EMPTY_BOX} with no {item} inside.")
        });
    }
    if s.no_movement {
        let days = r.random_range(5..30);
        parts.push(format!("The {PHRASE_NO_MOVEMENT} for {days} days."));
    }
    let request = if r.random_bool(s.buyer.harsh) {
        pick(
            r,
            &[
                "This is ridiculous, I want my money back now!",
                "Terrible seller, refund me immediately.",
                "I am very disappointed and want a full refund.",
            ],
        )
    } else if r.random_bool(s.buyer.polite) {
        pick(
            r,
            &[
                "Could you please help me with this?",
                "Would you please issue a refund?",
                "Can you please look into it?",
                "I think there may be a mistake, could you check?",
            ],
        )
    } else {
        pick(r, &["Please refund me.", "I want a refund.", "What happened?"])
    };
    parts.push(request.to_string());
    if r.random_bool(s.buyer.polite * 0.6) {
        parts.push(pick(r, &["Thank you.", "Thanks in advance.", "Thanks for your help."]).into());
    }
    join(parts)
}

fn seller_reply(r: &mut Rng, s: &Scene) -> String {
    let mut parts = Vec::new();
    if let Some(g) = greeting(r, s.seller) {
        parts.push(g.to_string());
    }
    if r.random_bool(s.seller.polite * 0.6) {
        parts.push(
            pick(
                r,
                &[
                    "Sorry for the trouble.",
                    "I apologize for the inconvenience.",
                    "Sorry to hear that.",
                ],
            )
            .into(),
        );
    }
    if s.seller_escalated_first {
        parts.push("I escalated this case because you stopped replying.".into());
    }
    let item = s.item;
    let mention_tracking = s.tracking && r.random_bool(0.6);
    let core = match (s.claim_type, mention_tracking) {
        (ClaimType::Inr, true) => format!(
            "The parcel has tracking number 1Z{:08} and the carrier has a scan for it.",
            r.random_range(0..100_000_000u32)
        ),
        (ClaimType::Inr, false) => pick(
            r,
            &[
                "I posted it right after payment.",
                "It was sent out the same week.",
                "I mailed it the day after payment.",
            ],
        )
        .to_string(),
        (ClaimType::Snad, _) => match r.random_range(0..3) {
            0 => format!("The {item} was checked before shipping."),
            1 => format!("The photos show the exact {item} you received."),
            _ => format!("I described the {item} accurately."),
        },
    };
    parts.push(core);
    if s.incomplete_address {
        parts.push(format!(
            "You gave an {PHRASE_INCOMPLETE_ADDRESS} so the parcel came back to me."
        ));
    }
    if s.measurements {
        parts.push(format!("All the {PHRASE_MEASUREMENTS} are accurate."));
    }
    if r.random_bool(s.seller.harsh) {
        parts.push(
            pick(
                r,
                &[
                    "I will not accept this claim.",
                    "This claim is wrong and unfair.",
                    "Stop making false complaints.",
                ],
            )
            .into(),
        );
    } else if r.random_bool(s.seller.polite * 0.6) {
        parts.push(
            pick(
                r,
                &[
                    "Thank you for your patience.",
                    "Thanks for letting me know.",
                    "I appreciate your understanding.",
                ],
            )
            .into(),
        );
    }
    join(parts)
}

fn filler(r: &mut Rng, author: Party, style: Style, progress: f64) -> String {
    // Tempers fray as a dispute drags on.
    let harsh = (style.harsh * (0.6 + 0.8 * progress)).min(1.0);
    if r.random_bool(harsh) {
        return pick(
            r,
            match author {
                Party::Buyer => &[
                    "This is unacceptable.",
                    "Still nothing, this is awful.",
                    "You are ignoring me, terrible service.",
                    "I am done waiting.",
                ],
                Party::Seller => &[
                    "As I said before, it was shipped.",
                    "Your complaint is wrong.",
                    "I have nothing more to add.",
                    "This is a waste of time.",
                ],
            },
        )
        .into();
    }
    if r.random_bool(style.polite) {
        return pick(
            r,
            match author {
                Party::Buyer => &[
                    "Thanks for the reply.",
                    "Could you please send me an update?",
                    "Sorry to bother you again, any news?",
                    "Hello, just checking in.",
                    "I appreciate your help.",
                ],
                Party::Seller => &[
                    "Sorry for the delay.",
                    "Thank you for waiting.",
                    "Would you please send a photo?",
                    "I will gladly look into it.",
                    "Please bear with me.",
                ],
            },
        )
        .into();
    }
    pick(
        r,
        match author {
            Party::Buyer => &[
                "Any update on this?",
                "I am still waiting.",
                "Please respond.",
                "I already sent you photos.",
                "I opened this case two weeks ago.",
                "So what now?",
            ],
            Party::Seller => &[
                "I am checking with the carrier.",
                "Send me photos of the item.",
                "I will look into it.",
                "Why did you open a case?",
                "We shipped it on time.",
                "Then return the item.",
            ],
        },
    )
    .into()
}

fn pre_purchase(r: &mut Rng, item: &str) -> [Draft; 2] {
    [
        Draft {
            author: Party::Buyer,
            phase: Phase::PrePurchase,
            body: match r.random_range(0..3) {
                0 => format!("Hi, is this {item} still available?"),
                1 => format!("Does the {item} come with the original box?"),
                _ => format!("Can you ship the {item} quickly?"),
            },
        },
        Draft {
            author: Party::Seller,
            phase: Phase::PrePurchase,
            body: pick(
                r,
                &[
                    "Yes it is available.",
                    "Yes, thanks for asking.",
                    "Sure, it ships within two days.",
                ],
            )
            .into(),
        },
    ]
}

fn pre_dispute(r: &mut Rng, item: &str) -> [Draft; 2] {
    [
        Draft {
            author: Party::Buyer,
            phase: Phase::PreDispute,
            body: format!("When will my {item} ship?"),
        },
        Draft {
            author: Party::Seller,
            phase: Phase::PreDispute,
            body: pick(r, &["It ships tomorrow.", "Already on its way.", "Soon."]).into(),
        },
    ]
}

/// Builds a timestamp-sorted conversation of at least `scene.length`
/// messages (raised when the planted facts need more).
pub fn conversation(r: &mut Rng, s: &Scene) -> Vec<Message> {
    let mut core = vec![Draft {
        author: Party::Buyer,
        phase: Phase::DuringDispute,
        body: buyer_opening(r, s),
    }];
    if s.seller_responded {
        core.push(Draft {
            author: Party::Seller,
            phase: Phase::DuringDispute,
            body: seller_reply(r, s),
        });
    }
    let total = s.length.max(core.len());
    let mut extra = total - core.len();
    let mut drafts = Vec::with_capacity(total);
    if s.seller_responded && extra >= 2 && r.random_bool(0.25) {
        drafts.extend(pre_purchase(r, s.item));
        extra -= 2;
    }
    if s.seller_responded && extra >= 2 && r.random_bool(0.2) {
        drafts.extend(pre_dispute(r, s.item));
        extra -= 2;
    }
    drafts.extend(core);
    let mut last = drafts.last().map(|d| d.author).unwrap_or(Party::Buyer);
    for k in 0..extra {
        let author = if !s.seller_responded {
            Party::Buyer
        } else if r.random_bool(0.8) {
            match last {
                Party::Buyer => Party::Seller,
                Party::Seller => Party::Buyer,
            }
        } else {
            last
        };
        let style = match author {
            Party::Buyer => s.buyer,
            Party::Seller => s.seller,
        };
        let progress = (k + 1) as f64 / extra as f64;
        drafts.push(Draft {
            author,
            phase: Phase::DuringDispute,
            body: filler(r, author, style, progress),
        });
        last = author;
    }

    let day_ms = 86_400_000i64;
    let start = s
        .start_date
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp_millis();
    let mut t = start - 3 * day_ms;
    let mut out = Vec::with_capacity(drafts.len());
    for d in drafts {
        if d.phase != Phase::PrePurchase && t < start {
            t = start + r.random_range(1..5) * day_ms;
        }
        t += r.random_range(60_000..36 * 3_600_000);
        out.push(Message {
            author: d.author,
            timestamp_ms: t,
            body: d.body,
            phase: d.phase,
        });
    }
    out
}

/// Post-resolution note written by the arbitrator.
pub fn agent_summary(
    r: &mut Rng,
    s: &Scene,
    winner: Party,
    appeals: u32,
    contested: bool,
) -> String {
    let claim = match s.claim_type {
        ClaimType::Inr => "item not received",
        ClaimType::Snad => "item not as described",
    };
    let mut parts = vec![format!("Buyer opened an {claim} claim for a {}.", s.item)];
    if !s.seller_responded {
        parts.push("Seller did not respond to the claim.".into());
    }
    if s.tracking {
        parts.push("Tracking information was reviewed.".into());
    } else {
        parts.push("No tracking was provided.".into());
    }
    if s.empty_box {
        parts.push("Buyer reported receiving an empty package.".into());
    }
    if s.incomplete_address {
        parts.push("Seller stated the shipping address was incomplete.".into());
    }
    for _ in 0..appeals {
        let by = if r.random_bool(0.5) { "buyer" } else { "seller" };
        parts.push(format!(
            "The {by} filed an appeal and the case was reviewed again."
        ));
    }
    if contested {
        let notes = [
            "Agent requested additional documents from both parties.",
            "Decision was revisited following a supervisor review.",
            "A policy exception was applied after further review of the evidence.",
            "Conflicting statements from the parties required a second look at the history.",
            "Photos and carrier records were compared against the listing in detail.",
        ];
        let k = r.random_range(2..=4);
        for i in 0..k {
            parts.push(notes[(i + r.random_range(0..notes.len())) % notes.len()].into());
        }
    }
    parts.push(format!("Resolved in favor of the {winner}."));
    parts.join(" ")
}
