//! Tokenization shared by stimulus statistics, the mock scorer and the mock
//! embedder.

use alloc::string::String;
use alloc::vec::Vec;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// Fixed 50-word stopword list used by the offline mock providers.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "the", "and", "or", "but", "so", "if", "then", "than", //
    "of", "to", "in", "on", "at", "by", "for", "with", "from", "as", //
    "is", "was", "were", "be", "been", "are", "am", "it", "its", "this", //
    "that", "i", "me", "my", "we", "our", "you", "your", "he", "him", //
    "his", "she", "her", "they", "them", "their", "not", "just", "there", "had",
];

/// Unicode punctuation (categories Pc, Pd, Ps, Pe, Pi, Pf, Po) plus the
/// typographic marks that Unicode files under symbols.
pub fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
        || matches!(c, '`' | '´' | '^' | '~' | '¨' | '˜' | '‐' | '−')
}

pub fn strip_punctuation(text: &str) -> String {
    text.chars().filter(|c| !is_punctuation(*c)).collect()
}

/// Number of whitespace-separated units left after removing all punctuation.
pub fn word_count(text: &str) -> usize {
    strip_punctuation(text).split_whitespace().count()
}

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// Lowercased tokens with every non-alphanumeric character removed, in text
/// order. Stopwords are kept.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|tok| {
            tok.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// [`normalized_tokens`] with stopwords removed.
pub fn content_words(text: &str) -> Vec<String> {
    normalized_tokens(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}
