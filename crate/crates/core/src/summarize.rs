//! Step-list extraction: prompt a completion model with a transcript and
//! parse the enumerated list it returns.

use serde::{Deserialize, Serialize};

use crate::providers::{Completer, Prompt};
use crate::{par, Error, Result};

pub const DEFAULT_TEMPLATE: &str = "Based on this description list down the key steps for {task} using short phrases.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(rename = "task")]
    pub task_name: String,
    pub video_id: String,
    pub text: String,
}

impl Transcript {
    pub fn validate(&self) -> Result<()> {
        if self.task_name.trim().is_empty() {
            return Err(Error::invalid(format!("transcript {} has no task name", self.video_id)));
        }
        if self.text.trim().is_empty() {
            return Err(Error::invalid(format!("transcript {} has no text", self.video_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryStepSequence {
    pub video_id: String,
    pub steps: Vec<String>,
    pub raw_completion: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    /// Query appended after the transcript; `{task}` is replaced by the task name.
    pub template: String,
    /// Transcripts longer than this many characters keep only their head.
    pub max_transcript_chars: Option<usize>,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        SummarizeConfig {
            template: DEFAULT_TEMPLATE.to_string(),
            max_transcript_chars: None,
        }
    }
}

pub fn render_template(template: &str, task_name: &str) -> String {
    template.replace("{task}", task_name)
}

pub fn build_prompt(task_name: &str, transcript_text: &str, template: &str) -> Result<Prompt> {
    if task_name.trim().is_empty() || transcript_text.trim().is_empty() {
        return Err(Error::invalid("task name and transcript text must be non-empty"));
    }
    Prompt::new(format!("{transcript_text}\n{}", render_template(template, task_name)))
}

/// Strips one leading list marker (`12.`, `3)`, `-`, `*`, `•`).
fn strip_marker(line: &str) -> Option<&str> {
    let s = line.trim_start();
    if let Some(rest) = s.strip_prefix(['-', '*', '•']) {
        return Some(rest.trim_start());
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = s[digits..].strip_prefix(['.', ')'])?;
    // "1.5 cups" is a quantity, not an enumeration.
    if rest.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    Some(rest.trim_start())
}

/// The step text of a marked line, with every leading marker removed.
fn marked_content(line: &str) -> Option<&str> {
    let mut content = strip_marker(line)?;
    while let Some(inner) = strip_marker(content) {
        content = inner;
    }
    let content = content.trim();
    (!content.is_empty()).then_some(content)
}

/// Extracts the enumerated items of a completion, in order.
///
/// Only lines carrying a list marker contribute; preamble, interleaved and
/// trailing prose is dropped.
pub fn parse_steps(completion_text: &str) -> Vec<String> {
    completion_text
        .lines()
        .filter_map(marked_content)
        .map(str::to_string)
        .collect()
}

fn truncate_chars(text: &str, budget: Option<usize>) -> (&str, bool) {
    match budget {
        Some(n) => match text.char_indices().nth(n) {
            Some((byte, _)) => (&text[..byte], true),
            None => (text, false),
        },
        None => (text, false),
    }
}

pub fn summarize_transcript(
    t: &Transcript,
    completer: &dyn Completer,
    config: &SummarizeConfig,
) -> Result<SummaryStepSequence> {
    t.validate()?;
    let (text, truncated) = truncate_chars(&t.text, config.max_transcript_chars);
    if truncated {
        log::info!("{}: transcript truncated to {} chars", t.video_id, text.chars().count());
    }
    let prompt = build_prompt(&t.task_name, text, &config.template)?;
    let raw_completion = completer.complete(&prompt)?;
    let steps = parse_steps(&raw_completion);
    if steps.is_empty() {
        return Err(Error::EmptySummary {
            video_id: t.video_id.clone(),
        });
    }
    Ok(SummaryStepSequence {
        video_id: t.video_id.clone(),
        steps,
        raw_completion,
        truncated,
    })
}

/// Summarizes every transcript; empty summaries are skipped with a warning,
/// any other failure aborts.
pub fn summarize_all(
    transcripts: &[Transcript],
    completer: &dyn Completer,
    config: &SummarizeConfig,
    max_parallel: usize,
) -> Result<Vec<SummaryStepSequence>> {
    let results = par::bounded_map(transcripts, max_parallel, |t| {
        summarize_transcript(t, completer, config)
    });
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(s) => out.push(s),
            Err(Error::EmptySummary { video_id }) => {
                log::warn!("skipping {video_id}: no steps in completion");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Splits raw transcript text into sentences, for labeling transcripts
/// directly without a summarization pass.
pub fn transcript_sentences(t: &Transcript) -> SummaryStepSequence {
    let steps = t
        .text
        .split(['.', '!', '?', '\n'])
        .map(str::trim)
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .map(str::to_string)
        .collect();
    SummaryStepSequence {
        video_id: t.video_id.clone(),
        steps,
        raw_completion: String::new(),
        truncated: false,
    }
}
