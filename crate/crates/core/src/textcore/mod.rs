//! Tokenization, vocabulary, and the context encoder.

mod encoder;
mod vocab;

pub use encoder::{cosine, ContextEncoder, ContextVector, EncoderConfig, HashedNgramEncoder, Namespace};
pub use vocab::{
    is_structural, split_symbols, Fingerprint, TokenId, TokenSpace, Vocabulary, BOS, COMMA, EOS, EQUALS, LPAREN,
    QUOTE, RESERVED, RPAREN, SEP, UNK,
};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("bad encoder config: {0}")]
    BadConfig(String),
    #[error("utterance must be nonempty")]
    EmptyUtterance,
    #[error("bad vocabulary file at line {line}")]
    BadVocabFile { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Indices of intent/slot-name tokens in a tokenized API: every token that
/// is neither structural nor inside a quoted span.
pub fn label_positions<S: AsRef<str>>(api_tokens: &[S]) -> Vec<usize> {
    let mut in_quote = false;
    let mut out = Vec::new();
    for (i, tok) in api_tokens.iter().enumerate() {
        let tok = tok.as_ref();
        if tok == "\"" {
            in_quote = !in_quote;
        } else if !in_quote && !is_structural(tok) {
            out.push(i);
        }
    }
    out
}
