//! Text normalization, n-gram featurization and the shallow text classifier.

mod model;
mod ngrams;
mod normalize;

pub use model::{
    predict_text, train_text_model, LabeledDocument, TextFeatures, TextHyper, TextModel,
    TextModelFile,
};
pub use ngrams::{featurize_ngrams, ngram_hash, Vocabulary};
pub use normalize::{is_stopword, normalize, stem, tokenize, TokenStream, STOPWORDS};

use crate::domain::{Conversation, Party};

pub const BUYER_TOKEN: &str = "buyer:";
pub const SELLER_TOKEN: &str = "seller:";

pub fn author_token(party: Party) -> &'static str {
    match party {
        Party::Buyer => BUYER_TOKEN,
        Party::Seller => SELLER_TOKEN,
    }
}

pub fn is_author_token(token: &str) -> bool {
    token == BUYER_TOKEN || token == SELLER_TOKEN
}

/// All phases concatenated in timestamp order, each message prefixed by its
/// author token. The prefix tokens contain `:` so they can never collide
/// with a normalized word.
pub fn conversation_stream(conversation: &Conversation) -> TokenStream {
    let mut tokens = Vec::new();
    for m in &conversation.messages {
        tokens.push(author_token(m.author).to_string());
        tokens.extend(normalize(&m.body).tokens);
    }
    TokenStream { tokens }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Message, Phase};

    #[test]
    fn stream_prefixes_each_message_with_its_author() {
        let conv = Conversation {
            messages: vec![
                Message {
                    author: Party::Buyer,
                    timestamp_ms: 1,
                    body: "Where is the tracking?".into(),
                    phase: Phase::DuringDispute,
                },
                Message {
                    author: Party::Seller,
                    timestamp_ms: 2,
                    body: "Shipped today".into(),
                    phase: Phase::DuringDispute,
                },
            ],
        };
        assert_eq!(
            conversation_stream(&conv).tokens,
            vec!["buyer:", "track", "seller:", "ship", "today"]
        );
    }
}
