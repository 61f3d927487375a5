//! Deterministic offline providers.
//!
//! [`MockChat`] answers every prompt kind in the same output format as a real
//! model, using a transparent word-overlap rule for scoring so its decisions
//! can be checked independently of the parsers. [`MockEmbedder`] is a hashed
//! bag of content words.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::parse::parse_numbered_clauses;
use crate::prompt::{self, PromptKind};
use crate::similarity::{EmbedError, Embedder, EmbeddingVector};
use crate::text::{content_words, normalized_tokens};

/// Fraction of a clause's content words that must occur in a recall for the
/// mock scorer to count the clause as recalled.
pub const RECALL_THRESHOLD: f64 = 0.5;

pub const MOCK_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MockError {
    #[error("prompt does not match any known template")]
    UnknownPrompt,
    #[error("malformed {0} prompt")]
    Malformed(PromptKind),
}

pub(crate) fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

/// Whether the mock scorer counts `clause` as recalled given the recall's
/// token set. Clauses without content words are never recalled.
pub fn clause_recalled(clause: &str, recall_tokens: &BTreeSet<String>) -> bool {
    let words = content_words(clause);
    if words.is_empty() {
        return false;
    }
    let hit = words.iter().filter(|w| recall_tokens.contains(*w)).count();
    hit as f64 >= RECALL_THRESHOLD * words.len() as f64
}

/// The mock scorer's decisions: 1-based indices of recalled clauses.
pub fn mock_scored_set(clauses: &[String], recall: &str) -> BTreeSet<u32> {
    let tokens: BTreeSet<String> = normalized_tokens(recall).into_iter().collect();
    clauses
        .iter()
        .zip(1u32..)
        .filter(|(c, _)| clause_recalled(c, &tokens))
        .map(|(_, k)| k)
        .collect()
}

/// Recalled clauses ordered by where their content words first show up in the
/// recall (ties broken by clause number).
pub fn mock_ordered_sequence(clauses: &[String], recall: &str) -> Vec<u32> {
    let tokens = normalized_tokens(recall);
    let mut first: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, t) in tokens.iter().enumerate() {
        first.entry(t.as_str()).or_insert(i);
    }
    let scored = mock_scored_set(clauses, recall);
    let mut keyed: Vec<(usize, u32)> = scored
        .iter()
        .map(|&k| {
            let pos = content_words(&clauses[k as usize - 1])
                .iter()
                .filter_map(|w| first.get(w.as_str()).copied())
                .min()
                .unwrap_or(usize::MAX);
            (pos, k)
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, k)| k).collect()
}

const CONJUNCTIONS: [&str; 6] = ["and", "but", "or", "nor", "so", "yet"];

/// Splits prose into clauses at sentence punctuation (`.`, `!`, `?`, `;`) and
/// before coordinating conjunctions.
pub fn mock_segment(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        let t = cur.trim();
        if t.chars().any(char::is_alphanumeric) {
            out.push(t.to_string());
        }
        cur.clear();
    };
    for word in text.split_whitespace() {
        let bare: String = word
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        if CONJUNCTIONS.contains(&bare.as_str()) && !cur.trim().is_empty() {
            flush(&mut cur, &mut out);
        }
        if !cur.is_empty() {
            cur.push(' ');
        }
        cur.push_str(word);
        if word.ends_with(['.', '!', '?', ';']) {
            flush(&mut cur, &mut out);
        }
    }
    flush(&mut cur, &mut out);
    if out.is_empty() && !text.trim().is_empty() {
        out.push(text.trim().to_string());
    }
    out
}

const VOCAB: [&str; 64] = [
    "lantern", "harbor", "violin", "orchard", "bicycle", "glacier", "kitchen", "market", "teacher",
    "neighbor", "canyon", "ferry", "garden", "ladder", "mirror", "blanket", "compass", "festival",
    "library", "meadow", "notebook", "pepper", "quilt", "river", "saddle", "tunnel", "umbrella",
    "village", "window", "yard", "anchor", "basket", "candle", "desert", "engine", "feather",
    "guitar", "hammer", "island", "jacket", "kettle", "lemon", "mountain", "needle", "ocean",
    "pillow", "rabbit", "station", "thunder", "valley", "wagon", "marble", "cousin", "painter",
    "sailor", "baker", "climbed", "painted", "carried", "whistled", "borrowed", "searched",
    "mended", "crossed",
];

/// Deterministic stand-in for a chat model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockChat {
    pub seed: u64,
}

impl MockChat {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Completion for `prompt`. `variant` distinguishes repeated calls with the
    /// same prompt (e.g. several generated narratives from one template).
    pub fn complete(&self, prompt: &str, variant: u64) -> Result<String, MockError> {
        let kind = prompt::detect_kind(prompt).ok_or(MockError::UnknownPrompt)?;
        match kind {
            PromptKind::RecallScoring => self.score(prompt),
            PromptKind::OrderedScoring => self.order(prompt),
            PromptKind::RecallSegmentation => {
                let text = prompt
                    .strip_prefix(prompt::SEGMENTATION_INSTRUCTION)
                    .ok_or(MockError::Malformed(kind))?;
                Ok(numbered(&mock_segment(text)))
            }
            PromptKind::LureGeneration => self.lures(prompt, variant),
            PromptKind::NarrativeGeneration => self.generate(prompt, variant),
        }
    }

    fn sections(prompt: &str, kind: PromptKind) -> Result<(Vec<String>, &str), MockError> {
        let s = prompt::split_scoring_prompt(prompt).ok_or(MockError::Malformed(kind))?;
        let clauses =
            parse_numbered_clauses(s.segmentation).map_err(|_| MockError::Malformed(kind))?;
        Ok((clauses, s.recall))
    }

    fn score(&self, prompt: &str) -> Result<String, MockError> {
        let (clauses, recall) = Self::sections(prompt, PromptKind::RecallScoring)?;
        let set = mock_scored_set(&clauses, recall);
        let mut out = String::new();
        for (k, clause) in (1u32..).zip(&clauses) {
            if set.contains(&k) {
                out.push_str(&format!("{k}. Given - \"{clause}\"\n"));
            } else {
                out.push_str(&format!("{k}. Not given\n"));
            }
        }
        out.push('\n');
        out.push_str(&paren_list(set.iter().copied()));
        Ok(out)
    }

    fn order(&self, prompt: &str) -> Result<String, MockError> {
        let (clauses, recall) = Self::sections(prompt, PromptKind::OrderedScoring)?;
        let seq = mock_ordered_sequence(&clauses, recall);
        Ok(format!(
            "{}\n\n{}",
            recall.trim(),
            paren_list(seq.into_iter())
        ))
    }

    fn word(&self, variant: u64, key: &str) -> &'static str {
        let h = hash64(&[
            &self.seed.to_le_bytes(),
            &variant.to_le_bytes(),
            key.as_bytes(),
        ]);
        VOCAB[(h % VOCAB.len() as u64) as usize]
    }

    fn lures(&self, prompt: &str, variant: u64) -> Result<String, MockError> {
        let seg = prompt
            .strip_suffix(prompt::LURE_INSTRUCTION)
            .ok_or(MockError::Malformed(PromptKind::LureGeneration))?;
        let l = parse_numbered_clauses(seg)
            .map_err(|_| MockError::Malformed(PromptKind::LureGeneration))?
            .len();
        let mut out = String::new();
        for k in 1..=l {
            let a = self.word(variant, &format!("lure-a-{k}"));
            let b = self.word(variant, &format!("lure-b-{k}"));
            out.push_str(&format!(
                "{k}.5. Meanwhile, I remembered the {a} and the {b}.\n"
            ));
        }
        Ok(out)
    }

    fn generate(&self, prompt: &str, variant: u64) -> Result<String, MockError> {
        let kind = PromptKind::NarrativeGeneration;
        let n: usize = prompt
            .split("exactly ")
            .nth(1)
            .and_then(|rest| rest.split_whitespace().next())
            .and_then(|t| t.parse().ok())
            .ok_or(MockError::Malformed(kind))?;
        let body = prompt
            .split_once('\n')
            .and_then(|(_, rest)| rest.split("\n\nGenerate a new personal narrative").next())
            .ok_or(MockError::Malformed(kind))?;
        let template = parse_numbered_clauses(body).map_err(|_| MockError::Malformed(kind))?;
        if n == 0 {
            return Err(MockError::Malformed(kind));
        }
        let clauses: Vec<String> = (0..n)
            .map(|i| self.rewrite(&template[i % template.len()], variant))
            .collect();
        Ok(numbered(&clauses))
    }

    // Replaces every content word, keeping stopwords and punctuation.
    fn rewrite(&self, clause: &str, variant: u64) -> String {
        let words: Vec<String> = clause
            .split_whitespace()
            .map(|tok| {
                let start = tok.find(char::is_alphanumeric);
                let end = tok.rfind(char::is_alphanumeric);
                let (Some(s), Some(e)) = (start, end) else {
                    return tok.to_string();
                };
                let e = e + tok[e..].chars().next().map_or(1, char::len_utf8);
                let core_word = &tok[s..e];
                let lower: String = core_word.chars().flat_map(char::to_lowercase).collect();
                if crate::text::is_stopword(&lower) {
                    return tok.to_string();
                }
                let mut rep = String::from(self.word(variant, &lower));
                if core_word.starts_with(char::is_uppercase) {
                    rep = capitalize(&rep);
                }
                format!("{}{}{}", &tok[..s], rep, &tok[e..])
            })
            .collect();
        words.join(" ")
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn numbered(items: &[String]) -> String {
    let mut out = String::new();
    for (k, t) in (1..).zip(items) {
        out.push_str(&format!("{k}. {t}\n"));
    }
    out
}

fn paren_list(items: impl Iterator<Item = u32>) -> String {
    let parts: Vec<String> = items.map(|k| k.to_string()).collect();
    format!("({})", parts.join(", "))
}

/// Hashed bag-of-content-words embedding, L2-normalized.
///
/// Texts without content words fall back to all tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockEmbedder {
    model_id: String,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        let model_id = if seed == 0 {
            "mock-embed".to_string()
        } else {
            format!("mock-embed-{seed}")
        };
        Self { model_id, seed }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Embedder for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut words = content_words(text);
        if words.is_empty() {
            words = normalized_tokens(text);
        }
        if words.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let mut values = alloc::vec![0.0f64; MOCK_EMBEDDING_DIM];
        for w in &words {
            let h = hash64(&[&self.seed.to_le_bytes(), w.as_bytes()]);
            values[(h % MOCK_EMBEDDING_DIM as u64) as usize] += 1.0;
        }
        let norm = crate::math::sqrt(values.iter().map(|v| v * v).sum());
        for v in &mut values {
            *v /= norm;
        }
        Ok(EmbeddingVector {
            model_id: self.model_id.clone(),
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_lures, parse_ordered_sequence, parse_scored_set};
    use crate::prompt::{render_prompt, PromptArgs};
    use alloc::vec;

    fn clauses() -> Vec<String> {
        vec![
            "The dog barked loudly.".into(),
            "My sister opened the window.".into(),
            "A storm rolled over the hills.".into(),
            "It was it.".into(),
        ]
    }

    #[test]
    fn scoring_rule() {
        let c = clauses();
        let set = mock_scored_set(&c, "Storm over hills, then a dog barked.");
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![1, 3]);
        // "sister" is 1 of 3 content words (sister, opened, window)
        assert!(mock_scored_set(&c, "sister").is_empty());
        assert_eq!(
            mock_scored_set(&c, "sister window")
                .into_iter()
                .collect::<Vec<_>>(),
            vec![2]
        );
    }

    #[test]
    fn ordering_follows_recall() {
        let c = clauses();
        assert_eq!(
            mock_ordered_sequence(&c, "Storm over hills, then a dog barked."),
            vec![3, 1]
        );
    }

    #[test]
    fn completions_parse_back_to_decisions() {
        let c = clauses();
        let seg: String = numbered(&c);
        let recall = "The window was opened by my sister, and then the dog barked loudly.";
        let args = PromptArgs::new()
            .with("narrative", c.join(" "))
            .with("segmentation", &seg)
            .with("recall", recall);
        let chat = MockChat::new(1);
        let p = render_prompt(PromptKind::RecallScoring, &args).unwrap();
        let done = chat.complete(&p, 0).unwrap();
        assert_eq!(
            parse_scored_set(&done, 4).unwrap(),
            mock_scored_set(&c, recall)
        );
        let p = render_prompt(
            PromptKind::OrderedScoring,
            &args.with("scoring_completion", &done),
        )
        .unwrap();
        let done = chat.complete(&p, 0).unwrap();
        assert_eq!(parse_ordered_sequence(&done, 4).unwrap(), vec![2, 1]);
    }

    #[test]
    fn empty_recall_scores_nothing() {
        let c = clauses();
        assert!(mock_scored_set(&c, "").is_empty());
    }

    #[test]
    fn segmenter_splits_on_punctuation_and_conjunctions() {
        let got = mock_segment("I ran home and ate; then slept. But not well!");
        assert_eq!(
            got,
            vec!["I ran home", "and ate;", "then slept.", "But not well!"]
        );
        assert_eq!(mock_segment("   "), Vec::<String>::new());
    }

    #[test]
    fn generation_has_exact_clause_count_and_varies() {
        let args = PromptArgs::new().with("n_clauses", 5).with(
            "template",
            "1. The dog barked.\n2. I ran home.\n3. Mom laughed.",
        );
        let p = render_prompt(PromptKind::NarrativeGeneration, &args).unwrap();
        let chat = MockChat::new(3);
        let a = chat.complete(&p, 0).unwrap();
        let b = chat.complete(&p, 1).unwrap();
        assert_eq!(parse_numbered_clauses(&a).unwrap().len(), 5);
        assert_ne!(a, b);
        assert_eq!(a, chat.complete(&p, 0).unwrap());
        assert!(a.starts_with("1. The "));
    }

    #[test]
    fn lure_completion_parses() {
        let seg = numbered(&clauses());
        let p = render_prompt(
            PromptKind::LureGeneration,
            &PromptArgs::new().with("segmentation", seg),
        )
        .unwrap();
        let done = MockChat::new(0).complete(&p, 0).unwrap();
        let lures = parse_lures(&done, 4).unwrap();
        assert_eq!(lures.len(), 4);
        assert_eq!(lures[0].label.0, 1);
    }

    #[test]
    fn unknown_prompt() {
        assert_eq!(
            MockChat::new(0).complete("hi", 0),
            Err(MockError::UnknownPrompt)
        );
    }

    #[test]
    fn embedder_is_normalized_and_deterministic() {
        let e = MockEmbedder::default();
        let a = e.embed("The dog barked at the dog.").unwrap();
        assert_eq!(a.dim(), MOCK_EMBEDDING_DIM);
        let n: f64 = a.values.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(a, e.embed("The dog barked at the dog.").unwrap());
        assert!(e.embed("the and").is_ok());
        assert_eq!(e.embed(" ... "), Err(EmbedError::EmptyInput));
        assert_ne!(
            MockEmbedder::new(7).embed("dog barked").unwrap().values,
            e.embed("dog barked").unwrap().values
        );
    }
}
