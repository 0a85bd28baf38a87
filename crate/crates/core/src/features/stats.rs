//! Corpus-level statistics: feature/outcome correlations, discriminative
//! vocabulary by KL contribution, and dataset summaries.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{ClaimType, DisputeCase, Family, OutcomeLabel};
use crate::error::{OdrError, Result};
use crate::features::{FeatureSchema, Matrix};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub family: Family,
    pub abs_correlation: f64,
    /// +1 when larger values go with seller wins, -1 otherwise, 0 when undefined.
    pub sign: i8,
    pub constant: bool,
    /// Rows used (those where the feature is present).
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
}

/// Pearson correlation of `x` with `y`; `None` when either side is constant.
pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Point-biserial correlation of every column with the 0/1 label, skipping
/// missing entries per column. Sorted by descending magnitude, then name.
pub fn correlate_with_outcome(
    features: &Matrix,
    schema: &FeatureSchema,
    labels: &[u8],
) -> Result<CorrelationReport> {
    if labels.len() != features.n_rows {
        return Err(OdrError::InvalidInput("labels and features differ in length".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(OdrError::SingleClass);
    }
    let mut rows = Vec::with_capacity(features.n_cols);
    for (j, col) in schema.columns.iter().enumerate() {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, &l) in labels.iter().enumerate() {
            let v = features.get(i, j);
            if !v.is_nan() {
                x.push(v);
                y.push(l as f64);
            }
        }
        let r = pearson(&x, &y);
        rows.push(CorrelationRow {
            feature: col.name.clone(),
            family: col.family,
            abs_correlation: r.map_or(0.0, f64::abs),
            sign: match r {
                Some(v) if v > 0.0 => 1,
                Some(v) if v < 0.0 => -1,
                _ => 0,
            },
            constant: r.is_none(),
            n: x.len(),
        });
    }
    rows.sort_by(|a, b| {
        b.abs_correlation
            .total_cmp(&a.abs_correlation)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(CorrelationReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlSide {
    pub claim_type: ClaimType,
    pub winner: OutcomeLabel,
    pub unigrams: Vec<TermScore>,
    pub bigrams: Vec<TermScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlVocabReport {
    pub smoothing: f64,
    pub top_k: usize,
    pub sides: Vec<KlSide>,
}

/// Per-term contribution to `KL(win || lose)` with add-`alpha` smoothing over
/// the union vocabulary: `p(w|win) * ln(p(w|win) / p(w|lose))`.
pub fn kl_term_scores(
    win: &HashMap<String, usize>,
    lose: &HashMap<String, usize>,
    alpha: f64,
) -> BTreeMap<String, f64> {
    let vocab: BTreeSet<&String> = win.keys().chain(lose.keys()).collect();
    let v = vocab.len() as f64;
    let n_win: usize = win.values().sum();
    let n_lose: usize = lose.values().sum();
    let dw = n_win as f64 + alpha * v;
    let dl = n_lose as f64 + alpha * v;
    vocab
        .into_iter()
        .map(|t| {
            let pw = (win.get(t).copied().unwrap_or(0) as f64 + alpha) / dw;
            let pl = (lose.get(t).copied().unwrap_or(0) as f64 + alpha) / dl;
            (t.clone(), pw * (pw / pl).ln())
        })
        .collect()
}

fn top_positive(scores: &BTreeMap<String, f64>, k: usize) -> Vec<TermScore> {
    let mut v: Vec<TermScore> = scores
        .iter()
        .filter(|(_, s)| **s > 0.0)
        .map(|(t, s)| TermScore {
            term: t.clone(),
            score: *s,
        })
        .collect();
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
    v.truncate(k);
    v
}

fn count_terms(cases: &[&DisputeCase]) -> (HashMap<String, usize>, HashMap<String, usize>) {
    let mut uni = HashMap::new();
    let mut bi = HashMap::new();
    for c in cases {
        for m in &c.conversation.messages {
            let toks = normalize(&m.body).tokens;
            for t in &toks {
                *uni.entry(t.clone()).or_default() += 1;
            }
            for w in toks.windows(2) {
                *bi.entry(format!("{} {}", w[0], w[1])).or_default() += 1;
            }
        }
    }
    (uni, bi)
}

/// Terms most characteristic of each winning side, separately for SNAD and
/// INR claims. A term lands on the side whose smoothed probability is larger.
pub fn kl_vocabulary(corpus: &[DisputeCase], alpha: f64, top_k: usize) -> Result<KlVocabReport> {
    let mut sides = Vec::new();
    for claim_type in [ClaimType::Snad, ClaimType::Inr] {
        let pick = |o: OutcomeLabel| -> Vec<&DisputeCase> {
            corpus
                .iter()
                .filter(|c| c.claim.claim_type == claim_type && c.outcome == Some(o))
                .collect()
        };
        let seller = pick(OutcomeLabel::SellerWins);
        let buyer = pick(OutcomeLabel::BuyerWins);
        for (docs, name) in [(&seller, "seller wins"), (&buyer, "buyer wins")] {
            if docs.is_empty() {
                return Err(OdrError::EmptySplit(format!("{claim_type}/{name}")));
            }
        }
        let (su, sb) = count_terms(&seller);
        let (bu, bb) = count_terms(&buyer);
        for (winner, (wu, wb), (lu, lb)) in [
            (OutcomeLabel::SellerWins, (&su, &sb), (&bu, &bb)),
            (OutcomeLabel::BuyerWins, (&bu, &bb), (&su, &sb)),
        ] {
            sides.push(KlSide {
                claim_type,
                winner,
                unigrams: top_positive(&kl_term_scores(wu, lu, alpha), top_k),
                bigrams: top_positive(&kl_term_scores(wb, lb, alpha), top_k),
            });
        }
    }
    Ok(KlVocabReport {
        smoothing: alpha,
        top_k,
        sides,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n: usize,
    pub seller_wins: usize,
    pub buyer_wins: usize,
    pub unlabeled: usize,
    /// Seller wins over labeled cases; 0 when nothing is labeled.
    pub seller_win_rate: f64,
    /// Lower median of conversation lengths.
    pub length_median: usize,
    pub length_mean: f64,
    /// Population standard deviation.
    pub length_sd: f64,
    /// Case counts for 0, 1, 2 and 3+ appeals.
    pub appeal_counts: [usize; 4],
    pub empty: bool,
}

pub fn corpus_stats(corpus: &[DisputeCase]) -> CorpusStats {
    let n = corpus.len();
    let seller_wins = corpus
        .iter()
        .filter(|c| c.outcome == Some(OutcomeLabel::SellerWins))
        .count();
    let buyer_wins = corpus
        .iter()
        .filter(|c| c.outcome == Some(OutcomeLabel::BuyerWins))
        .count();
    let mut lengths: Vec<usize> = corpus.iter().map(|c| c.conversation.len()).collect();
    lengths.sort_unstable();
    let mut appeal_counts = [0usize; 4];
    for c in corpus {
        appeal_counts[(c.claim.appeal_count as usize).min(3)] += 1;
    }
    let (median, mean, sd) = if n == 0 {
        (0, 0.0, 0.0)
    } else {
        let mean = lengths.iter().sum::<usize>() as f64 / n as f64;
        let var = lengths
            .iter()
            .map(|&l| (l as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        (lengths[(n - 1) / 2], mean, var.sqrt())
    };
    let labeled = seller_wins + buyer_wins;
    CorpusStats {
        n,
        seller_wins,
        buyer_wins,
        unlabeled: n - labeled,
        seller_win_rate: if labeled == 0 {
            0.0
        } else {
            seller_wins as f64 / labeled as f64
        },
        length_median: median,
        length_mean: mean,
        length_sd: sd,
        appeal_counts,
        empty: n == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::sample_case;
    use crate::domain::{Message, Party, Phase};
    use crate::features::{Column, ColumnKind};
    use rand::{Rng, SeedableRng};

    fn schema(n: usize) -> FeatureSchema {
        let cols = (0..n)
            .map(|j| Column {
                name: format!("f{j}"),
                family: Family::Claim,
                kind: ColumnKind::Numeric,
                source: format!("s{j}"),
            })
            .collect();
        FeatureSchema::from_columns(cols, 0)
    }

    #[test]
    fn label_column_correlates_perfectly_and_constant_is_flagged() {
        let labels = [1u8, 0, 1, 1, 0];
        let rows: Vec<Vec<f64>> = labels.iter().map(|&l| vec![l as f64, 3.0]).collect();
        let r = correlate_with_outcome(&Matrix::from_rows(&rows), &schema(2), &labels).unwrap();
        assert_eq!(r.rows[0].feature, "f0");
        assert!((r.rows[0].abs_correlation - 1.0).abs() < 1e-12);
        assert_eq!(r.rows[0].sign, 1);
        assert_eq!(r.rows[1].abs_correlation, 0.0);
        assert!(r.rows[1].constant);
    }

    #[test]
    fn independent_column_is_near_zero_and_matches_direct_formula() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.6))).collect();
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let r = correlate_with_outcome(&Matrix::from_rows(&rows), &schema(1), &labels).unwrap();
        assert!(r.rows[0].abs_correlation < 0.02);
        // Direct textbook formula with n-1 denominators.
        let nf = n as f64;
        let ys: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (nf - 1.0);
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        assert!((r.rows[0].abs_correlation - (cov / (sx * sy)).abs()).abs() < 1e-10);
    }

    #[test]
    fn identical_distributions_score_zero() {
        let counts: HashMap<String, usize> =
            [("a".to_string(), 3), ("b".to_string(), 1)].into_iter().collect();
        for s in kl_term_scores(&counts, &counts, 0.5).values() {
            assert_eq!(*s, 0.0);
        }
    }

    fn doc(id: &str, text: &str, outcome: OutcomeLabel) -> DisputeCase {
        let mut c = sample_case(id);
        c.claim.claim_type = ClaimType::Snad;
        c.outcome = Some(outcome);
        c.conversation.messages = vec![Message {
            author: Party::Buyer,
            timestamp_ms: 0,
            body: text.into(),
            phase: Phase::DuringDispute,
        }];
        c
    }

    fn toy() -> Vec<DisputeCase> {
        use OutcomeLabel::*;
        let mut v = vec![
            doc("1", "refund broken item", BuyerWins),
            doc("2", "broken refund", BuyerWins),
            doc("3", "item refund", BuyerWins),
            doc("4", "item shipped receipt", SellerWins),
            doc("5", "shipped receipt item", SellerWins),
            doc("6", "item receipt", SellerWins),
        ];
        for (i, c) in v.clone().into_iter().enumerate() {
            let mut inr = c;
            inr.case_id = format!("inr{i}");
            inr.claim.claim_type = ClaimType::Inr;
            v.push(inr);
        }
        v
    }

    #[test]
    fn seller_only_term_ranks_first_with_hand_computed_score() {
        let report = kl_vocabulary(&toy(), 0.5, 10).unwrap();
        let seller = report
            .sides
            .iter()
            .find(|s| s.claim_type == ClaimType::Snad && s.winner == OutcomeLabel::SellerWins)
            .unwrap();
        // Normalized tokens: seller docs {item x3, ship x2, receipt x3} = 8,
        // buyer docs {refund x3, broken x2, item x2} = 7, vocabulary of 5.
        // p(receipt|S) = 3.5/10.5, p(receipt|B) = 0.5/9.5.
        let ps: f64 = 3.5 / 10.5;
        let pb = 0.5 / 9.5;
        assert_eq!(seller.unigrams[0].term, "receipt");
        assert!((seller.unigrams[0].score - ps * (ps / pb).ln()).abs() < 1e-12);
        let buyer = report
            .sides
            .iter()
            .find(|s| s.claim_type == ClaimType::Snad && s.winner == OutcomeLabel::BuyerWins)
            .unwrap();
        assert_eq!(buyer.unigrams[0].term, "refund");
        let s: BTreeSet<_> = seller.unigrams.iter().map(|t| &t.term).collect();
        assert!(buyer.unigrams.iter().all(|t| !s.contains(&t.term)));
    }

    #[test]
    fn scores_match_brute_force_two_pass_count() {
        let cases = toy();
        let report = kl_vocabulary(&cases, 0.5, 100).unwrap();
        // Pass 1: collect every token of each class as a flat list.
        let mut win_tokens = Vec::new();
        let mut lose_tokens = Vec::new();
        for c in cases.iter().filter(|c| c.claim.claim_type == ClaimType::Inr) {
            let toks = normalize(&c.conversation.messages[0].body).tokens;
            if c.outcome == Some(OutcomeLabel::BuyerWins) {
                win_tokens.extend(toks);
            } else {
                lose_tokens.extend(toks);
            }
        }
        // Pass 2: score each vocabulary term by linear scans.
        let mut vocab: Vec<String> = win_tokens.iter().chain(&lose_tokens).cloned().collect();
        vocab.sort();
        vocab.dedup();
        let v = vocab.len() as f64;
        let side = report
            .sides
            .iter()
            .find(|s| s.claim_type == ClaimType::Inr && s.winner == OutcomeLabel::BuyerWins)
            .unwrap();
        for t in &side.unigrams {
            let cw = win_tokens.iter().filter(|x| **x == t.term).count() as f64;
            let cl = lose_tokens.iter().filter(|x| **x == t.term).count() as f64;
            let pw = (cw + 0.5) / (win_tokens.len() as f64 + 0.5 * v);
            let pl = (cl + 0.5) / (lose_tokens.len() as f64 + 0.5 * v);
            assert_eq!(t.score, pw * (pw / pl).ln());
        }
        assert!(!side.unigrams.is_empty());
    }

    #[test]
    fn empty_split_is_named() {
        let only_snad: Vec<_> = toy()
            .into_iter()
            .filter(|c| c.claim.claim_type == ClaimType::Snad)
            .collect();
        let err = kl_vocabulary(&only_snad, 0.5, 10).unwrap_err();
        assert!(matches!(err, OdrError::EmptySplit(s) if s == "INR/seller wins"));
    }

    #[test]
    fn stats_lower_median_and_empty() {
        let mut cases = Vec::new();
        for (i, len) in [1usize, 4, 100].iter().enumerate() {
            let mut c = sample_case(&i.to_string());
            c.conversation.messages = (0..*len)
                .map(|k| Message {
                    author: Party::Buyer,
                    timestamp_ms: k as i64,
                    body: "x".into(),
                    phase: Phase::DuringDispute,
                })
                .collect();
            cases.push(c);
        }
        assert_eq!(corpus_stats(&cases).length_median, 4);
        let e = corpus_stats(&[]);
        assert!(e.empty);
        assert_eq!(e.n, 0);
        assert_eq!(e.appeal_counts, [0; 4]);
    }
}
