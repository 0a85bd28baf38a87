//! Politeness strategy detectors.
//!
//! Each strategy is a lexicon or position rule over the message's lower-cased
//! word tokens (apostrophes folded, no stemming or stopword removal):
//!
//! | strategy | fires when |
//! |---|---|
//! | gratitude | any of `thank thanks thankyou appreciate appreciated grateful` |
//! | apologizing | any of `sorry apologize apologise apologies apology forgive pardon` |
//! | greeting_direct | first word is `hi hello hey dear greetings` |
//! | greeting_indirect | phrase `good morning/afternoon/evening/day` or `hope you/all/this` |
//! | please_start | first word is `please` |
//! | please_mid | `please` after the first word |
//! | deference | first word is `great good nice interesting cool excellent awesome` |
//! | indicative_request | phrase `i need/want/expect/demand/require`, `id like` or `i would like` |
//! | counterfactual_modal | phrase `could you` or `would you` |
//! | indicative_modal | phrase `can you` or `will you` |
//! | direct_question | first word is `what why who how where when which` |
//! | direct_start | first word is `so then and but or` |
//! | hedges | any hedge word (`think maybe perhaps probably ...`) |
//! | factuality | any of `really actually honestly surely indeed truly clearly obviously definitely certainly` or phrase `in fact` |
//! | positive_lexicon | any positive word (`good great happy glad ...`) |
//! | negative_lexicon | any negative word (`bad broken damaged scam ...`) |
//! | first_person_start | first word is a first-person singular pronoun |
//! | first_person_plural | any of `we our ours us ourselves weve` |
//! | first_person | a first-person singular pronoun after the first word |
//! | second_person | a second-person pronoun after the first word |
//! | second_person_start | first word is a second-person pronoun |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{OdrError, Result};
use crate::text::tokenize;

macro_rules! strategies {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum Strategy {
            $($variant),*
        }

        impl Strategy {
            pub const ALL: [Strategy; 21] = [$(Strategy::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Strategy::$variant => $name),*
                }
            }
        }
    };
}

strategies! {
    Gratitude => "gratitude",
    Apologizing => "apologizing",
    GreetingDirect => "greeting_direct",
    GreetingIndirect => "greeting_indirect",
    PleaseStart => "please_start",
    PleaseMid => "please_mid",
    Deference => "deference",
    IndicativeRequest => "indicative_request",
    CounterfactualModal => "counterfactual_modal",
    IndicativeModal => "indicative_modal",
    DirectQuestion => "direct_question",
    DirectStart => "direct_start",
    Hedges => "hedges",
    Factuality => "factuality",
    PositiveLexicon => "positive_lexicon",
    NegativeLexicon => "negative_lexicon",
    FirstPersonStart => "first_person_start",
    FirstPersonPlural => "first_person_plural",
    FirstPerson => "first_person",
    SecondPerson => "second_person",
    SecondPersonStart => "second_person_start",
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = OdrError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| OdrError::InvalidInput(format!("unknown politeness strategy `{s}`")))
    }
}

const GRATITUDE: &[&str] = &["thank", "thanks", "thankyou", "appreciate", "appreciated", "grateful"];
const APOLOGY: &[&str] = &["sorry", "apologize", "apologise", "apologies", "apology", "forgive", "pardon"];
const GREETING: &[&str] = &["hi", "hello", "hey", "dear", "greetings"];
const INDIRECT_GREETING: &[[&str; 2]] = &[
    ["good", "morning"],
    ["good", "afternoon"],
    ["good", "evening"],
    ["good", "day"],
    ["hope", "you"],
    ["hope", "all"],
    ["hope", "this"],
];
const DEFERENCE: &[&str] = &["great", "good", "nice", "interesting", "cool", "excellent", "awesome"];
const INDICATIVE_REQUEST: &[[&str; 2]] = &[
    ["i", "need"],
    ["i", "want"],
    ["i", "expect"],
    ["i", "demand"],
    ["i", "require"],
    ["id", "like"],
];
const COUNTERFACTUAL: &[[&str; 2]] = &[["could", "you"], ["would", "you"]];
const INDICATIVE: &[[&str; 2]] = &[["can", "you"], ["will", "you"]];
const QUESTION: &[&str] = &["what", "why", "who", "how", "where", "when", "which"];
const DIRECT_START: &[&str] = &["so", "then", "and", "but", "or"];
const HEDGES: &[&str] = &[
    "think", "thought", "believe", "maybe", "perhaps", "possibly", "probably", "suppose", "guess", "seem", "seems",
    "apparently", "somewhat", "might", "hopefully", "likely", "unclear", "fairly", "roughly",
];
const FACTUALITY: &[&str] = &[
    "really", "actually", "honestly", "surely", "indeed", "truly", "clearly", "obviously", "definitely", "certainly",
];
const POSITIVE: &[&str] = &[
    "good", "great", "excellent", "happy", "glad", "pleased", "perfect", "nice", "wonderful", "love", "fine", "satisfied",
    "helpful", "fast", "quick", "awesome", "fantastic", "amazing", "best", "kind",
];
const NEGATIVE: &[&str] = &[
    "bad", "broken", "damaged", "terrible", "awful", "worst", "wrong", "scam", "fraud", "fake", "poor", "useless",
    "angry", "disappointed", "horrible", "ridiculous", "defective", "lie", "lied", "liar", "unacceptable", "rude",
];
const FIRST_PERSON: &[&str] = &["i", "my", "mine", "me", "myself", "im", "ive", "id", "ill"];
const FIRST_PLURAL: &[&str] = &["we", "our", "ours", "us", "ourselves", "weve"];
const SECOND_PERSON: &[&str] = &["you", "your", "yours", "yourself", "youre", "youve", "youll", "youd", "u", "ur"];

/// The 21 strategy indicators of one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "BTreeMap<Strategy, bool>", try_from = "BTreeMap<Strategy, bool>")]
pub struct PolitenessVector {
    flags: [bool; 21],
}

impl PolitenessVector {
    pub fn get(&self, s: Strategy) -> bool {
        self.flags[s as usize]
    }

    fn set(&mut self, s: Strategy, on: bool) {
        self.flags[s as usize] = on;
    }

    /// Strategies that fired, in declaration order.
    pub fn active(&self) -> Vec<Strategy> {
        Strategy::ALL.into_iter().filter(|s| self.get(*s)).collect()
    }
}

impl From<PolitenessVector> for BTreeMap<Strategy, bool> {
    fn from(v: PolitenessVector) -> Self {
        Strategy::ALL.into_iter().map(|s| (s, v.get(s))).collect()
    }
}

impl TryFrom<BTreeMap<Strategy, bool>> for PolitenessVector {
    type Error = String;

    fn try_from(map: BTreeMap<Strategy, bool>) -> std::result::Result<Self, String> {
        if map.len() != 21 {
            return Err(format!("expected 21 strategies, found {}", map.len()));
        }
        let mut v = PolitenessVector::default();
        for (s, on) in map {
            v.set(s, on);
        }
        Ok(v)
    }
}

pub fn detect_politeness(text: &str) -> PolitenessVector {
    let words = tokenize(text);
    let first = words.first().map(String::as_str);
    let any = |lex: &[&str]| words.iter().any(|w| lex.contains(&w.as_str()));
    let after_first = |lex: &[&str]| words.iter().skip(1).any(|w| lex.contains(&w.as_str()));
    let starts = |lex: &[&str]| first.is_some_and(|f| lex.contains(&f));
    let phrase = |pairs: &[[&str; 2]]| {
        words
            .windows(2)
            .any(|w| pairs.iter().any(|p| w[0] == p[0] && w[1] == p[1]))
    };
    let would_like = words
        .windows(3)
        .any(|w| w[0] == "i" && w[1] == "would" && w[2] == "like");

    let mut v = PolitenessVector::default();
    v.set(Strategy::Gratitude, any(GRATITUDE));
    v.set(Strategy::Apologizing, any(APOLOGY));
    v.set(Strategy::GreetingDirect, starts(GREETING));
    v.set(Strategy::GreetingIndirect, phrase(INDIRECT_GREETING));
    v.set(Strategy::PleaseStart, first == Some("please"));
    v.set(Strategy::PleaseMid, after_first(&["please"]));
    v.set(Strategy::Deference, starts(DEFERENCE));
    v.set(Strategy::IndicativeRequest, phrase(INDICATIVE_REQUEST) || would_like);
    v.set(Strategy::CounterfactualModal, phrase(COUNTERFACTUAL));
    v.set(Strategy::IndicativeModal, phrase(INDICATIVE));
    v.set(Strategy::DirectQuestion, starts(QUESTION));
    v.set(Strategy::DirectStart, starts(DIRECT_START));
    v.set(Strategy::Hedges, any(HEDGES));
    v.set(Strategy::Factuality, any(FACTUALITY) || phrase(&[["in", "fact"]]));
    v.set(Strategy::PositiveLexicon, any(POSITIVE));
    v.set(Strategy::NegativeLexicon, any(NEGATIVE));
    v.set(Strategy::FirstPersonStart, starts(FIRST_PERSON));
    v.set(Strategy::FirstPersonPlural, any(FIRST_PLURAL));
    v.set(Strategy::FirstPerson, after_first(FIRST_PERSON));
    v.set(Strategy::SecondPerson, after_first(SECOND_PERSON));
    v.set(Strategy::SecondPersonStart, starts(SECOND_PERSON));
    v
}

/// Hand-labeled messages, one JSON object per line:
/// `{"text": ..., "strategies": [...]}`.
pub const LABELED_CORPUS: &str = include_str!("../../data/politeness_labeled.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMessage {
    pub text: String,
    pub strategies: Vec<Strategy>,
}

pub fn labeled_corpus() -> Result<Vec<LabeledMessage>> {
    LABELED_CORPUS
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| OdrError::Parse {
                line: i + 1,
                field: "<root>".into(),
                message: e.to_string(),
            })
        })
        .collect()
}
