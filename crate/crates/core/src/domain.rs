//! Dispute data model and its canonical line-delimited JSON form.
//!
//! Every numeric label in the system codes `SellerWins` as 1 and `BuyerWins`
//! as 0. Money is integer cents, timestamps are UTC epoch milliseconds and
//! dates are ISO-8601.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{OdrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeLabel {
    SellerWins,
    BuyerWins,
}

impl OutcomeLabel {
    /// Positive-class coding: `SellerWins` is 1.
    pub fn as_u8(self) -> u8 {
        match self {
            OutcomeLabel::SellerWins => 1,
            OutcomeLabel::BuyerWins => 0,
        }
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            OutcomeLabel::SellerWins
        } else {
            OutcomeLabel::BuyerWins
        }
    }

    pub fn winner(self) -> Party {
        match self {
            OutcomeLabel::SellerWins => Party::Seller,
            OutcomeLabel::BuyerWins => Party::Buyer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Party {
    Buyer,
    Seller,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Buyer => "buyer",
            Party::Seller => "seller",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClaimType {
    /// Item not received.
    #[serde(rename = "INR")]
    Inr,
    /// Significantly not as described.
    #[serde(rename = "SNAD")]
    Snad,
}

impl fmt::Display for ClaimType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClaimType::Inr => "INR",
            ClaimType::Snad => "SNAD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SellerType {
    B2C,
    C2C,
}

impl fmt::Display for SellerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SellerType::B2C => "B2C",
            SellerType::C2C => "C2C",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    PrePurchase,
    PreDispute,
    DuringDispute,
}

/// Feature families used to tag schema columns and planted rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Claim,
    Transaction,
    ClaimSeller,
    ClaimBuyer,
    SellerData,
    BuyerData,
    Textual,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Claim,
        Family::Transaction,
        Family::ClaimSeller,
        Family::ClaimBuyer,
        Family::SellerData,
        Family::BuyerData,
        Family::Textual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Claim => "Claim",
            Family::Transaction => "Transaction",
            Family::ClaimSeller => "Claim seller",
            Family::ClaimBuyer => "Claim buyer",
            Family::SellerData => "Seller data",
            Family::BuyerData => "Buyer data",
            Family::Textual => "Textual",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimRecord {
    pub claim_type: ClaimType,
    pub first_escalating_party: Party,
    pub recent_escalating_party: Party,
    pub seller_responded: bool,
    pub seller_responded_before_escalation: bool,
    pub appeal_count: u32,
    /// Written by the arbitrator after resolution; never a model input.
    pub agent_summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionRecord {
    pub item_price_cents: u64,
    pub category_id: String,
    pub shipping_tracking_present: bool,
    pub auction: bool,
    pub transaction_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerProfile {
    pub tenure_days: u32,
    pub seller_type: SellerType,
    pub feedback_score: i64,
    pub past_dispute_count: u32,
    pub top_rated: bool,
    pub account_confirmed: bool,
    pub country: String,
    pub site_locale: String,
    pub info_last_modified_days_ago: u32,
    pub credit_card_on_file: bool,
    pub transaction_volume: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerProfile {
    pub tenure_days: u32,
    pub past_dispute_count_last_year: u32,
    pub country: String,
    pub anonymous_email: bool,
    pub tax_status: String,
    pub transaction_volume: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub author: Party,
    pub timestamp_ms: i64,
    pub body: String,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conversation {
    pub messages: Vec<Message>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// First message written by `author` in the given phase.
    pub fn first_by(&self, author: Party, phase: Phase) -> Option<&Message> {
        self.messages
            .iter()
            .find(|m| m.author == author && m.phase == phase)
    }

    /// Lower-cased concatenation of all bodies, used for phrase predicates.
    pub fn lowercase_text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&m.body.to_lowercase());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisputeCase {
    pub case_id: String,
    pub claim: ClaimRecord,
    pub transaction: TransactionRecord,
    pub seller: SellerProfile,
    pub buyer: BuyerProfile,
    pub conversation: Conversation,
    pub outcome: Option<OutcomeLabel>,
}

impl DisputeCase {
    /// Checks the per-case invariants; `field` in the error names the offender.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        if self.case_id.trim().is_empty() {
            return Err(("case_id".into(), "must be non-empty".into()));
        }
        if self.claim.seller_responded_before_escalation && !self.claim.seller_responded {
            return Err((
                "claim.seller_responded_before_escalation".into(),
                "cannot be true when seller_responded is false".into(),
            ));
        }
        for (i, m) in self.conversation.messages.iter().enumerate() {
            if m.body.trim().is_empty() {
                return Err((
                    format!("conversation.messages[{i}].body"),
                    "must be non-empty after trimming".into(),
                ));
            }
            if i > 0 && self.conversation.messages[i - 1].timestamp_ms > m.timestamp_ms {
                return Err((
                    format!("conversation.messages[{i}].timestamp_ms"),
                    "messages must be sorted by timestamp".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> Option<u8> {
        self.outcome.map(OutcomeLabel::as_u8)
    }

    pub fn buyer_id(&self) -> String {
        format!("B-{}", self.case_id)
    }
}

/// Weekly purchase history of the buyer around a dispute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerTimeline {
    pub buyer_id: String,
    pub weekly_transaction_counts: Vec<u32>,
    /// 1-based week numbers holding a dispute.
    pub dispute_week_indices: Vec<u32>,
}

/// Parses one corpus line, mapping serde failures onto the offending field path.
pub fn parse_case_line(line: &str, line_no: usize) -> Result<DisputeCase> {
    let de = &mut serde_json::Deserializer::from_str(line);
    let case: DisputeCase = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        OdrError::Parse {
            line: line_no,
            field: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    case.validate().map_err(|(field, message)| OdrError::Parse {
        line: line_no,
        field,
        message,
    })?;
    Ok(case)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<DisputeCase>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| OdrError::io(path, e))?;
    let mut seen = HashSet::new();
    let mut cases = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| OdrError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let case = parse_case_line(&line, i + 1)?;
        if !seen.insert(case.case_id.clone()) {
            return Err(OdrError::DuplicateCaseId(case.case_id));
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn to_canonical_line(case: &DisputeCase) -> String {
    serde_json::to_string(case).expect("dispute cases always serialize")
}

pub fn write_corpus(cases: &[DisputeCase], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| OdrError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for case in cases {
        w.write_all(to_canonical_line(case).as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| OdrError::io(path, e))?;
    }
    w.flush().map_err(|e| OdrError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| OdrError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| OdrError::InvalidInput(format!("serialization failed: {e}")))?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| OdrError::io(path, e))?;
    }
    w.flush().map_err(|e| OdrError::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| OdrError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| OdrError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let item = serde_path_to_error::deserialize(de).map_err(|e| OdrError::Parse {
            line: i + 1,
            field: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::fixtures::sample_case;
    use super::*;

    #[test]
    fn empty_file_reads_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(read_corpus(&p).unwrap().is_empty());
    }

    #[test]
    fn write_is_deterministic_and_one_line_per_case() {
        let dir = tempfile::tempdir().unwrap();
        let cases = vec![sample_case("A"), sample_case("B")];
        let (p1, p2) = (dir.path().join("1.jsonl"), dir.path().join("2.jsonl"));
        write_corpus(&cases, &p1).unwrap();
        write_corpus(&cases, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        assert_eq!(b1, std::fs::read(&p2).unwrap());
        assert_eq!(String::from_utf8(b1).unwrap().lines().count(), 2);

        write_corpus(&[], &p1).unwrap();
        assert!(std::fs::read(&p1).unwrap().is_empty());
    }

    #[test]
    fn reread_matches_canonical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let mut live = sample_case("live");
        live.outcome = None;
        let cases = vec![sample_case("A"), live];
        write_corpus(&cases, &p).unwrap();
        let back = read_corpus(&p).unwrap();
        assert_eq!(back, cases);
        let q = dir.path().join("d.jsonl");
        write_corpus(&back, &q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"outcome\":null"));
        assert!(text.contains("\"outcome\":\"BUYER_WINS\""));
        assert!(text.contains("\"transaction_date\":\"2015-03-14\""));
    }

    #[test]
    fn duplicate_case_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dup.jsonl");
        write_corpus(&[sample_case("X"), sample_case("Y"), sample_case("X")], &p).unwrap();
        match read_corpus(&p) {
            Err(OdrError::DuplicateCaseId(id)) => assert_eq!(id, "X"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        let good = to_canonical_line(&sample_case("A"));
        let bad = to_canonical_line(&sample_case("B"))
            .replace("\"claim_type\":\"INR\"", "\"claim_type\":\"LOST\"");
        std::fs::write(&p, format!("{good}\n{bad}\n")).unwrap();
        match read_corpus(&p) {
            Err(OdrError::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "claim.claim_type");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invariant_violations_are_parse_errors() {
        let mut c = sample_case("A");
        c.claim.seller_responded = false;
        c.claim.seller_responded_before_escalation = true;
        let err = parse_case_line(&to_canonical_line(&c), 5).unwrap_err();
        assert!(matches!(err, OdrError::Parse { line: 5, ref field, .. } if field.contains("before_escalation")));

        let mut c = sample_case("A");
        c.conversation.messages[1].timestamp_ms = 0;
        assert!(parse_case_line(&to_canonical_line(&c), 1).is_err());

        let mut c = sample_case("A");
        c.conversation.messages[0].body = "   ".into();
        assert!(parse_case_line(&to_canonical_line(&c), 1).is_err());
    }

    #[test]
    fn label_coding_is_seller_positive() {
        assert_eq!(OutcomeLabel::SellerWins.as_u8(), 1);
        assert_eq!(OutcomeLabel::BuyerWins.as_u8(), 0);
        assert_eq!(OutcomeLabel::from_positive(true), OutcomeLabel::SellerWins);
    }
}
