//! Parsers turning raw chat completions into structured results.
//!
//! Completions vary in their preamble, so every parser looks for a fixed
//! structure (the last integer list, numbered lines, `k.5` lines) and ignores
//! the rest.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Lure, LureLabel};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no bracketed or parenthesized integer list found in completion: {raw:?}")]
    NoList { raw: String },
    #[error("every index in the final list is outside 1..={l}: {raw:?}")]
    AllOutOfRange { l: u32, raw: String },
    #[error("only {found} lures parsed, need at least {needed}")]
    InsufficientLures { found: usize, needed: usize },
    #[error("numbered lines not consecutive: expected {expected}, found {found}")]
    NonConsecutive { expected: u32, found: u32 },
    #[error("numbered line {0} has no text")]
    EmptyItem(u32),
    #[error("no numbered lines found in completion: {raw:?}")]
    NoNumberedLines { raw: String },
}

// Contents of every `(...)` / `[...]` group that is a comma-separated list of
// unsigned integers (possibly empty), in text order.
fn integer_lists(text: &str) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let close = match bytes[i] {
            b'(' => b')',
            b'[' => b']',
            _ => {
                i += 1;
                continue;
            }
        };
        let start = i + 1;
        let Some(len) = bytes[start..]
            .iter()
            .position(|&b| b == close || b == b'(' || b == b'[')
        else {
            break;
        };
        let end = start + len;
        if bytes[end] == close {
            if let Some(list) = parse_int_list(&text[start..end]) {
                out.push(list);
            }
            i = end + 1;
        } else {
            // nested opener: restart from it
            i = end;
        }
    }
    out
}

fn parse_int_list(inner: &str) -> Option<Vec<u32>> {
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    inner
        .split(',')
        .map(|tok| {
            let t = tok.trim();
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                None
            } else {
                t.parse::<u32>().ok()
            }
        })
        .collect()
}

fn final_list(raw: &str, l: u32) -> Result<Vec<u32>, ParseError> {
    let list = integer_lists(raw).pop().ok_or_else(|| ParseError::NoList {
        raw: raw.to_string(),
    })?;
    if list.is_empty() {
        return Ok(list);
    }
    let kept: Vec<u32> = list.into_iter().filter(|&k| (1..=l).contains(&k)).collect();
    if kept.is_empty() {
        return Err(ParseError::AllOutOfRange {
            l,
            raw: raw.to_string(),
        });
    }
    Ok(kept)
}

/// Set of recalled clause indices from a scoring completion: the final
/// integer list in `(...)` or `[...]`, filtered to `1..=l`.
///
/// An empty final list, `()`, is a valid empty set.
pub fn parse_scored_set(raw: &str, l: u32) -> Result<BTreeSet<u32>, ParseError> {
    Ok(final_list(raw, l)?.into_iter().collect())
}

/// Clause indices in recall order from an ordered-scoring completion. Repeats
/// keep their first occurrence.
pub fn parse_ordered_sequence(raw: &str, l: u32) -> Result<Vec<u32>, ParseError> {
    let mut seen = BTreeSet::new();
    Ok(final_list(raw, l)?
        .into_iter()
        .filter(|k| seen.insert(*k))
        .collect())
}

// "12.5. text", "12.5: text", "12.5) text", "12.5 text"
fn lure_line(line: &str) -> Option<(u32, &str)> {
    let line = line.trim_start();
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let k: u32 = line[..digits].parse().ok()?;
    let rest = line[digits..].strip_prefix(".5")?;
    if rest.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    let rest = rest.strip_prefix(['.', ':', ')']).unwrap_or(rest);
    let text = rest.trim();
    if text.is_empty() {
        None
    } else {
        Some((k, text))
    }
}

/// Lures from a lure-generation completion: lines labeled `k.5` with
/// `k` in `0..=l`, sorted by label. Integer-labeled lines are ignored and a
/// repeated label keeps its first text.
///
/// Fewer than `l / 2` lures means the completion should be regenerated.
pub fn parse_lures(raw: &str, l: u32) -> Result<Vec<Lure>, ParseError> {
    let mut lures: Vec<Lure> = Vec::new();
    for (k, text) in raw.lines().filter_map(lure_line) {
        if k > l || lures.iter().any(|x| x.label.0 == k) {
            continue;
        }
        lures.push(Lure {
            label: LureLabel(k),
            text: text.to_string(),
        });
    }
    lures.sort_by_key(|x| x.label);
    if lures.len() * 2 < l as usize {
        return Err(ParseError::InsufficientLures {
            found: lures.len(),
            needed: (l as usize).div_ceil(2),
        });
    }
    Ok(lures)
}

/// Trims parsed lures to exactly `l` for a pool. Extra lures are dropped
/// starting with `0.5` (before the first clause), then from the end.
pub fn select_lures(mut lures: Vec<Lure>, l: usize) -> Result<Vec<Lure>, ParseError> {
    if lures.len() < l {
        return Err(ParseError::InsufficientLures {
            found: lures.len(),
            needed: l,
        });
    }
    if lures.len() > l {
        if let Some(pos) = lures.iter().position(|x| x.label.0 == 0) {
            lures.remove(pos);
        }
    }
    lures.truncate(l);
    Ok(lures)
}

// "7. text" or "7) text"
fn numbered_line(line: &str) -> Option<(u32, &str)> {
    let line = line.trim_start();
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let n: u32 = line[..digits].parse().ok()?;
    let rest = line[digits..].strip_prefix(['.', ')'])?;
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
        return None;
    }
    Some((n, rest.trim()))
}

/// Clause texts from a numbered-list completion (generated narrative or recall
/// segmentation). Numbering must run 1, 2, 3, ... without gaps; lines that are
/// not numbered are ignored.
pub fn parse_numbered_clauses(raw: &str) -> Result<Vec<String>, ParseError> {
    let mut out = Vec::new();
    for (n, text) in raw.lines().filter_map(numbered_line) {
        let expected = out.len() as u32 + 1;
        if n != expected {
            return Err(ParseError::NonConsecutive { expected, found: n });
        }
        if text.is_empty() {
            return Err(ParseError::EmptyItem(n));
        }
        out.push(text.to_string());
    }
    if out.is_empty() {
        return Err(ParseError::NoNumberedLines {
            raw: raw.to_string(),
        });
    }
    Ok(out)
}
