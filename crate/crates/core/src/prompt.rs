//! Prompt templates for narrative generation, lure generation, recall scoring,
//! ordered recall scoring and recall segmentation.
//!
//! Templates are reproduced verbatim; only the `{placeholder}` slots change.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    NarrativeGeneration,
    LureGeneration,
    RecallScoring,
    OrderedScoring,
    RecallSegmentation,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::NarrativeGeneration,
        PromptKind::LureGeneration,
        PromptKind::RecallScoring,
        PromptKind::OrderedScoring,
        PromptKind::RecallSegmentation,
    ];

    /// Placeholders that must be supplied (non-empty) to render this kind.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptKind::NarrativeGeneration => &["n_clauses", "template"],
            PromptKind::LureGeneration => &["segmentation"],
            PromptKind::RecallScoring => &["narrative", "segmentation", "recall"],
            PromptKind::OrderedScoring => {
                &["narrative", "segmentation", "recall", "scoring_completion"]
            }
            PromptKind::RecallSegmentation => &["narrative"],
        }
    }

    /// Default sampling temperature for this kind.
    pub fn default_temperature(self) -> f64 {
        match self {
            PromptKind::NarrativeGeneration => 0.6,
            PromptKind::LureGeneration => 0.3,
            _ => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::NarrativeGeneration => "narrative_generation",
            PromptKind::LureGeneration => "lure_generation",
            PromptKind::RecallScoring => "recall_scoring",
            PromptKind::OrderedScoring => "ordered_scoring",
            PromptKind::RecallSegmentation => "recall_segmentation",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{kind} prompt is missing placeholder `{placeholder}`")]
    MissingPlaceholder {
        kind: PromptKind,
        placeholder: &'static str,
    },
}

/// Named string arguments for [`render_prompt`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptArgs(BTreeMap<String, String>);

impl PromptArgs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl ToString) -> Self {
        self.0.insert(name.to_string(), value.to_string());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

pub const GENERATION_HEAD: &str =
    "This is a true personal narrative about a single event in someone's life. It has exactly {n_clauses} clauses:";
pub const GENERATION_INSTRUCTION: &str = "Generate a new personal narrative that is unique and about something completely different. Try to keep the overall narrative structure of the personal narrative above, but change as much of the subject matter and action as possible. Do not just use the narrative and replace key persons, places and things. Make it completely new. This new narrative must also contain exactly {n_clauses} clauses.";

pub const LURE_INSTRUCTION: &str = "The items above all fit together to tell a story. Add more items of roughly the same length, numbered 1.5, 2.5, and so on, interleaving the existing items, elaborating on the story, and without repetition. These new items should introduce completely new plot elements, but still make sense in the context of the rest of the story. Add as many items as possible.";

pub const SCORING_ORIGINAL: &str = "This is the original text:";
pub const SCORING_PIECES: &str =
    "It can be broken down into the following independent pieces of information:";
pub const SCORING_ALTERNATIVE: &str = "Here is an alternative version of the original text where some of the above pieces of information may be missing:";
pub const SCORING_INSTRUCTION: &str = "For each of the numbered information pieces of the list above, evaluate whether the information of each piece is given in the alternative version of the story, stating the number and showing the corresponding passage from the alternative story it is given in. After, write all the numbers of the pieces that are given in the alternative version of the story in a set of brackets at the end of the response.";

pub const ORDER_INSTRUCTION: &str = "Now repeat the alternative version of the narrative with the number of the independent piece of information inserted next to the location in which it appears in the alternative version. Then, list the numbers separately in the order in which they appear in the alternative story immediately above. The final list of numbers should be enclosed in parentheses.";

pub const SEGMENTATION_INSTRUCTION: &str = "Provide a word-for-word segmentation of the following narrative into linguistic clauses, numbered in order of appearance in the narrative:";

fn required<'a>(
    kind: PromptKind,
    args: &'a PromptArgs,
    placeholder: &'static str,
) -> Result<&'a str, PromptError> {
    match args.get(placeholder) {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(PromptError::MissingPlaceholder { kind, placeholder }),
    }
}

/// Renders the template for `kind` with `args` substituted.
///
/// Ordered scoring is the recall-scoring prompt, followed by the completion it
/// produced, followed by the ordering instruction.
pub fn render_prompt(kind: PromptKind, args: &PromptArgs) -> Result<String, PromptError> {
    for p in kind.placeholders() {
        required(kind, args, p)?;
    }
    let get = |p| required(kind, args, p);
    let out = match kind {
        PromptKind::NarrativeGeneration => {
            let n = get("n_clauses")?;
            let parts: Vec<String> = alloc::vec![
                GENERATION_HEAD.replace("{n_clauses}", n),
                get("template")?.to_string(),
                String::new(),
                GENERATION_INSTRUCTION.replace("{n_clauses}", n),
            ];
            parts.join("\n")
        }
        PromptKind::LureGeneration => {
            let mut s = get("segmentation")?.to_string();
            s.push('\n');
            s.push_str(LURE_INSTRUCTION);
            s
        }
        PromptKind::RecallScoring => {
            scoring_prompt(get("narrative")?, get("segmentation")?, get("recall")?)
        }
        PromptKind::OrderedScoring => {
            let mut s = scoring_prompt(get("narrative")?, get("segmentation")?, get("recall")?);
            s.push_str("\n\n");
            s.push_str(get("scoring_completion")?.trim_end());
            s.push_str("\n\n");
            s.push_str(ORDER_INSTRUCTION);
            s
        }
        PromptKind::RecallSegmentation => {
            let mut s = SEGMENTATION_INSTRUCTION.to_string();
            s.push('\n');
            s.push_str(get("narrative")?);
            s
        }
    };
    Ok(out)
}

fn scoring_prompt(narrative: &str, segmentation: &str, recall: &str) -> String {
    let parts = [
        SCORING_ORIGINAL,
        narrative,
        "",
        SCORING_PIECES,
        segmentation,
        "",
        SCORING_ALTERNATIVE,
        recall,
        "",
        SCORING_INSTRUCTION,
    ];
    parts.join("\n")
}

/// Sections of a rendered scoring (or ordered-scoring) prompt, recovered from
/// the fixed sentences. Used by the offline mock provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringSections<'a> {
    pub narrative: &'a str,
    pub segmentation: &'a str,
    pub recall: &'a str,
    /// Prior completion, present for ordered-scoring prompts.
    pub scoring_completion: Option<&'a str>,
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = from + text[from..].find(end)?;
    Some(text[from..to].trim_matches('\n'))
}

pub fn split_scoring_prompt(prompt: &str) -> Option<ScoringSections<'_>> {
    let narrative = between(prompt, SCORING_ORIGINAL, SCORING_PIECES)?;
    let segmentation = between(prompt, SCORING_PIECES, SCORING_ALTERNATIVE)?;
    let recall = between(prompt, SCORING_ALTERNATIVE, SCORING_INSTRUCTION)?;
    let scoring_completion = between(prompt, SCORING_INSTRUCTION, ORDER_INSTRUCTION);
    Some(ScoringSections {
        narrative,
        segmentation,
        recall,
        scoring_completion,
    })
}

/// Identifies which template produced `prompt`, by its fixed sentences.
pub fn detect_kind(prompt: &str) -> Option<PromptKind> {
    if prompt.contains(ORDER_INSTRUCTION) {
        Some(PromptKind::OrderedScoring)
    } else if prompt.contains(SCORING_INSTRUCTION) {
        Some(PromptKind::RecallScoring)
    } else if prompt.contains(LURE_INSTRUCTION) {
        Some(PromptKind::LureGeneration)
    } else if prompt.starts_with(SEGMENTATION_INSTRUCTION) {
        Some(PromptKind::RecallSegmentation)
    } else if prompt.contains("Generate a new personal narrative") {
        Some(PromptKind::NarrativeGeneration)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scoring_args() -> PromptArgs {
        PromptArgs::new()
            .with("narrative", "A. B.")
            .with("segmentation", "1. A.\n2. B.")
            .with("recall", "Something about B.")
    }

    #[test]
    fn scoring_prompt_layout() {
        let p = render_prompt(PromptKind::RecallScoring, &scoring_args()).unwrap();
        assert!(p.starts_with("This is the original text:\nA. B.\n\nIt can be broken down"));
        assert!(p.contains("\n1. A.\n2. B.\n\nHere is an alternative version"));
        assert!(p.ends_with("in a set of brackets at the end of the response."));
        let s = split_scoring_prompt(&p).unwrap();
        assert_eq!(s.narrative, "A. B.");
        assert_eq!(s.segmentation, "1. A.\n2. B.");
        assert_eq!(s.recall, "Something about B.");
        assert_eq!(s.scoring_completion, None);
        assert_eq!(detect_kind(&p), Some(PromptKind::RecallScoring));
    }

    #[test]
    fn ordered_prompt_is_scoring_plus_completion_plus_instruction() {
        let scoring = render_prompt(PromptKind::RecallScoring, &scoring_args()).unwrap();
        let args = scoring_args().with("scoring_completion", "2. Given\n\n(2)\n");
        let p = render_prompt(PromptKind::OrderedScoring, &args).unwrap();
        assert!(p.starts_with(&scoring));
        assert!(p.ends_with(ORDER_INSTRUCTION));
        assert_eq!(
            split_scoring_prompt(&p).unwrap().scoring_completion,
            Some("2. Given\n\n(2)")
        );
        assert_eq!(detect_kind(&p), Some(PromptKind::OrderedScoring));
    }

    #[test]
    fn generation_substitutes_clause_count_twice() {
        let args = PromptArgs::new()
            .with("n_clauses", 18)
            .with("template", "1. x");
        let p = render_prompt(PromptKind::NarrativeGeneration, &args).unwrap();
        assert_eq!(p.matches("exactly 18 clauses").count(), 2);
        assert!(!p.contains('{'));
        assert_eq!(detect_kind(&p), Some(PromptKind::NarrativeGeneration));
    }

    #[test]
    fn missing_or_empty_placeholder_is_named() {
        let err = render_prompt(
            PromptKind::LureGeneration,
            &PromptArgs::new().with("segmentation", " "),
        )
        .unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingPlaceholder {
                kind: PromptKind::LureGeneration,
                placeholder: "segmentation"
            }
        );
        assert!(err.to_string().contains("segmentation"));
        let err = render_prompt(PromptKind::RecallScoring, &PromptArgs::new()).unwrap_err();
        assert!(err.to_string().contains("`narrative`"));
    }

    #[test]
    fn segmentation_and_lure_prompts_detected() {
        let p = render_prompt(
            PromptKind::RecallSegmentation,
            &PromptArgs::new().with("narrative", "He ran."),
        )
        .unwrap();
        assert_eq!(detect_kind(&p), Some(PromptKind::RecallSegmentation));
        let p = render_prompt(
            PromptKind::LureGeneration,
            &PromptArgs::new().with("segmentation", "1. He ran."),
        )
        .unwrap();
        assert_eq!(detect_kind(&p), Some(PromptKind::LureGeneration));
        assert_eq!(detect_kind("hello"), None);
    }
}
