//! Tabular representation of a dispute.
//!
//! The schema is derived from a corpus: booleans and two-level enums become
//! 0/1 columns, open categorical fields become one-hot columns over their ten
//! most frequent levels plus `OTHER`, and the text model contributes its
//! seller-wins probability and document embedding. Missing entries hold NaN
//! and are flagged in the mask; learners treat NaN as missing and reject
//! infinities.

mod stats;

use std::collections::{BTreeMap, HashMap};

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{ClaimType, DisputeCase, Family, Party, SellerType};
use crate::error::{OdrError, Result};
use crate::text::TextFeatures;

pub use stats::{
    corpus_stats, correlate_with_outcome, kl_term_scores, kl_vocabulary, CorpusStats,
    CorrelationReport, CorrelationRow, KlSide, KlVocabReport, TermScore,
};

pub const TOP_LEVELS: usize = 10;
pub const OTHER_LEVEL: &str = "OTHER";
/// Source name shared by all embedding columns, so ablation treats the block as one unit.
pub const EMBEDDING_SOURCE: &str = "text.embedding";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Boolean,
    OneHot { level: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub family: Family,
    #[serde(flatten)]
    pub kind: ColumnKind,
    /// Dotted path of the case field the column is computed from.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
    pub embedding_dim: usize,
    pub hash: String,
}

/// Categorical fields and how to read them from a case.
const CATEGORICAL: &[(&str, Family)] = &[
    ("transaction.category_id", Family::Transaction),
    ("seller.country", Family::SellerData),
    ("seller.site_locale", Family::SellerData),
    ("buyer.country", Family::BuyerData),
    ("buyer.tax_status", Family::BuyerData),
];

fn categorical_value<'a>(case: &'a DisputeCase, source: &str) -> &'a str {
    match source {
        "transaction.category_id" => &case.transaction.category_id,
        "seller.country" => &case.seller.country,
        "seller.site_locale" => &case.seller.site_locale,
        "buyer.country" => &case.buyer.country,
        "buyer.tax_status" => &case.buyer.tax_status,
        _ => unreachable!("unknown categorical source {source}"),
    }
}

fn col(name: &str, family: Family, kind: ColumnKind, source: &str) -> Column {
    Column {
        name: name.to_string(),
        family,
        kind,
        source: source.to_string(),
    }
}

impl FeatureSchema {
    /// Builds the column registry; categorical levels come from `corpus`.
    pub fn build(corpus: &[DisputeCase], embedding_dim: usize) -> Self {
        use ColumnKind::{Boolean, Numeric};
        use Family::*;
        let mut columns = vec![
            col("claim_type_inr", Claim, Boolean, "claim.claim_type"),
            col("first_escalating_party_seller", Claim, Boolean, "claim.first_escalating_party"),
            col("recent_escalating_party_seller", Claim, Boolean, "claim.recent_escalating_party"),
            col("seller_responded", Claim, Boolean, "claim.seller_responded"),
            col(
                "seller_responded_before_escalation",
                Claim,
                Boolean,
                "claim.seller_responded_before_escalation",
            ),
            col("item_price", Transaction, Numeric, "transaction.item_price_cents"),
            col("shipping_tracking_present", Transaction, Boolean, "transaction.shipping_tracking_present"),
            col("auction", Transaction, Boolean, "transaction.auction"),
            col("transaction_month", Transaction, Numeric, "transaction.transaction_date"),
            col("seller_tenure_days", ClaimSeller, Numeric, "seller.tenure_days"),
            col("seller_type_b2c", ClaimSeller, Boolean, "seller.seller_type"),
            col("seller_feedback_score", ClaimSeller, Numeric, "seller.feedback_score"),
            col("seller_past_disputes", ClaimSeller, Numeric, "seller.past_dispute_count"),
            col("seller_top_rated", ClaimSeller, Boolean, "seller.top_rated"),
            col("seller_account_confirmed", SellerData, Boolean, "seller.account_confirmed"),
            col(
                "seller_info_last_modified_days",
                SellerData,
                Numeric,
                "seller.info_last_modified_days_ago",
            ),
            col("seller_credit_card_on_file", SellerData, Boolean, "seller.credit_card_on_file"),
            col("seller_transaction_volume", SellerData, Numeric, "seller.transaction_volume"),
            col("buyer_tenure_days", ClaimBuyer, Numeric, "buyer.tenure_days"),
            col(
                "buyer_disputes_last_year",
                ClaimBuyer,
                Numeric,
                "buyer.past_dispute_count_last_year",
            ),
            col("buyer_anonymous_email", BuyerData, Boolean, "buyer.anonymous_email"),
            col("buyer_transaction_volume", BuyerData, Numeric, "buyer.transaction_volume"),
            col("buyer_same_country_as_seller", BuyerData, Boolean, "buyer.country"),
            col("buyer_message_count", Textual, Numeric, "conversation.messages"),
            col("seller_message_count", Textual, Numeric, "conversation.messages"),
            col("text_p_seller_wins", Textual, Numeric, "text.p_seller_wins"),
        ];
        for &(source, family) in CATEGORICAL {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for c in corpus {
                *counts.entry(categorical_value(c, source)).or_default() += 1;
            }
            let mut levels: Vec<(&str, usize)> = counts.into_iter().collect();
            levels.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            let field = source.rsplit('.').next().unwrap_or(source);
            let prefix = source.split('.').next().unwrap_or(source);
            for (level, _) in levels.iter().take(TOP_LEVELS) {
                columns.push(col(
                    &format!("{prefix}_{field}={level}"),
                    family,
                    ColumnKind::OneHot {
                        level: level.to_string(),
                    },
                    source,
                ));
            }
            columns.push(col(
                &format!("{prefix}_{field}={OTHER_LEVEL}"),
                family,
                ColumnKind::OneHot {
                    level: OTHER_LEVEL.to_string(),
                },
                source,
            ));
        }
        for k in 0..embedding_dim {
            columns.push(col(&format!("text_embedding_{k}"), Textual, Numeric, EMBEDDING_SOURCE));
        }
        Self::from_columns(columns, embedding_dim)
    }

    pub fn from_columns(columns: Vec<Column>, embedding_dim: usize) -> Self {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&columns).expect("columns serialize"));
        h.update(embedding_dim.to_le_bytes());
        FeatureSchema {
            columns,
            embedding_dim,
            hash: hex::encode(&h.finalize()[..16]),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Distinct source fields in schema order.
    pub fn sources(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.columns {
            if !out.contains(&c.source) {
                out.push(c.source.clone());
            }
        }
        out
    }

    pub fn columns_of_source(&self, source: &str) -> Vec<usize> {
        self.indices_where(|c| c.source == source)
    }

    pub fn columns_of_families(&self, families: &[Family]) -> Vec<usize> {
        self.indices_where(|c| families.contains(&c.family))
    }

    pub fn indices_where(&self, pred: impl Fn(&Column) -> bool) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| pred(c))
            .map(|(i, _)| i)
            .collect()
    }

    /// Schema restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> FeatureSchema {
        let columns = indices.iter().map(|&i| self.columns[i].clone()).collect();
        let dim = indices
            .iter()
            .filter(|&&i| self.columns[i].source == EMBEDDING_SOURCE)
            .count();
        Self::from_columns(columns, dim)
    }

    /// Fails when any column reads the outcome or the post-resolution summary.
    pub fn audit_sources(&self) -> Result<()> {
        for c in &self.columns {
            if c.source.starts_with("outcome")
                || c.source.contains("agent_summary")
                || c.source.contains("appeal_count")
            {
                return Err(OdrError::InvalidInput(format!(
                    "column `{}` reads post-resolution field `{}`",
                    c.name, c.source
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

/// Count of categorical values that fell back to `OTHER`, per source field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub other_counts: BTreeMap<String, usize>,
}

fn b(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

/// Maps a case and its text features onto `schema`.
pub fn assemble(
    case: &DisputeCase,
    text: &TextFeatures,
    schema: &FeatureSchema,
    report: Option<&mut AssemblyReport>,
) -> FeatureVector {
    let mut values = Vec::with_capacity(schema.len());
    let mut missing = Vec::with_capacity(schema.len());
    let mut hits: HashMap<&str, bool> = HashMap::new();
    let mut embedding_k = 0usize;
    for c in &schema.columns {
        let v = match (&c.kind, c.name.as_str()) {
            (ColumnKind::OneHot { level }, _) => {
                let value = categorical_value(case, &c.source);
                if level == OTHER_LEVEL {
                    let other = !hits.get(c.source.as_str()).copied().unwrap_or(false);
                    b(other)
                } else {
                    let hit = value == level;
                    if hit {
                        hits.insert(c.source.as_str(), true);
                    }
                    b(hit)
                }
            }
            (_, "claim_type_inr") => b(case.claim.claim_type == ClaimType::Inr),
            (_, "first_escalating_party_seller") => {
                b(case.claim.first_escalating_party == Party::Seller)
            }
            (_, "recent_escalating_party_seller") => {
                b(case.claim.recent_escalating_party == Party::Seller)
            }
            (_, "seller_responded") => b(case.claim.seller_responded),
            (_, "seller_responded_before_escalation") => {
                b(case.claim.seller_responded_before_escalation)
            }
            (_, "item_price") => case.transaction.item_price_cents as f64 / 100.0,
            (_, "shipping_tracking_present") => b(case.transaction.shipping_tracking_present),
            (_, "auction") => b(case.transaction.auction),
            (_, "transaction_month") => case.transaction.transaction_date.month() as f64,
            (_, "seller_tenure_days") => case.seller.tenure_days as f64,
            (_, "seller_type_b2c") => b(case.seller.seller_type == SellerType::B2C),
            (_, "seller_feedback_score") => case.seller.feedback_score as f64,
            (_, "seller_past_disputes") => case.seller.past_dispute_count as f64,
            (_, "seller_top_rated") => b(case.seller.top_rated),
            (_, "seller_account_confirmed") => b(case.seller.account_confirmed),
            (_, "seller_info_last_modified_days") => case.seller.info_last_modified_days_ago as f64,
            (_, "seller_credit_card_on_file") => b(case.seller.credit_card_on_file),
            (_, "seller_transaction_volume") => case.seller.transaction_volume as f64,
            (_, "buyer_tenure_days") => case.buyer.tenure_days as f64,
            (_, "buyer_disputes_last_year") => case.buyer.past_dispute_count_last_year as f64,
            (_, "buyer_anonymous_email") => b(case.buyer.anonymous_email),
            (_, "buyer_transaction_volume") => case.buyer.transaction_volume as f64,
            (_, "buyer_same_country_as_seller") => b(case.buyer.country == case.seller.country),
            (_, "buyer_message_count") => count_by(case, Party::Buyer),
            (_, "seller_message_count") => count_by(case, Party::Seller),
            (_, "text_p_seller_wins") => text.p_seller_wins,
            _ if c.source == EMBEDDING_SOURCE => {
                let v = if text.neutral {
                    f64::NAN
                } else {
                    text.embedding.get(embedding_k).copied().unwrap_or(f64::NAN)
                };
                embedding_k += 1;
                v
            }
            _ => f64::NAN,
        };
        missing.push(v.is_nan());
        values.push(v);
    }
    if let Some(report) = report {
        for &(source, _) in CATEGORICAL {
            let has_other = schema.columns.iter().any(|c| {
                c.source == source
                    && matches!(&c.kind, ColumnKind::OneHot { level } if level == OTHER_LEVEL)
            });
            if has_other && !hits.get(source).copied().unwrap_or(false) {
                *report.other_counts.entry(source.to_string()).or_default() += 1;
            }
        }
    }
    FeatureVector { values, missing }
}

fn count_by(case: &DisputeCase, party: Party) -> f64 {
    case.conversation
        .messages
        .iter()
        .filter(|m| m.author == party)
        .count() as f64
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "matrix shape");
        Matrix {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), n_cols, data)
    }

    pub fn from_vectors(vectors: &[FeatureVector]) -> Self {
        let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
        Matrix::from_rows(&rows)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(rows.len(), self.n_cols, data)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Matrix::new(self.n_rows, cols.len(), data)
    }

    /// Rejects infinities; NaN is the missing-value sentinel.
    pub fn check_finite(&self, names: &[String]) -> Result<()> {
        for i in 0..self.n_rows {
            for (j, v) in self.row(i).iter().enumerate() {
                if v.is_infinite() {
                    return Err(OdrError::NonFinite {
                        column: names.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
                    });
                }
            }
        }
        Ok(())
    }
}
