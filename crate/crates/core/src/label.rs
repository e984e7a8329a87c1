//! Re-labels summary step sequences with key steps.
//!
//! Greedy assignment: repeatedly take the (summary step, key step) pair with
//! the highest similarity, retire both, and stop once no positive similarity
//! remains. Matches are emitted in summary order.

use serde::{Deserialize, Serialize};

use crate::cluster::{EmbeddedSentence, KeyStep};
use crate::providers::EmbeddingVector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub key_step_id: usize,
    pub matched_sentence: String,
    pub source_position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyStepSequence {
    pub video_id: String,
    pub items: Vec<LabeledItem>,
}

impl KeyStepSequence {
    /// Builds a sequence directly from key step ids, e.g. for simulated data.
    pub fn from_ids(video_id: impl Into<String>, ids: &[usize], label: impl Fn(usize) -> String) -> Self {
        KeyStepSequence {
            video_id: video_id.into(),
            items: ids
                .iter()
                .enumerate()
                .map(|(pos, &id)| LabeledItem {
                    key_step_id: id,
                    matched_sentence: label(id),
                    source_position: pos,
                })
                .collect(),
        }
    }

    pub fn ids(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.key_step_id).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Best cosine between `step` and any member of `k`; ties go to the first
/// member in stored order.
pub fn step_cluster_similarity<'k>(step: &EmbeddingVector, k: &'k KeyStep) -> Result<(f64, &'k EmbeddedSentence)> {
    let mut best: Option<(f64, &EmbeddedSentence)> = None;
    for m in &k.members {
        if m.embedding.dimension() != step.dimension() {
            return Err(Error::invalid("embedding dimension mismatch"));
        }
        let s = step.cosine(&m.embedding);
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, m));
        }
    }
    best.ok_or_else(|| Error::invalid(format!("key step {} has no members", k.id)))
}

/// Similarity matrix `C[i][j]` with the argmax members `H[i][j]`.
pub struct AlignmentState<'k> {
    pub similarity: Vec<Vec<f64>>,
    pub best_member: Vec<Vec<&'k EmbeddedSentence>>,
}

impl<'k> AlignmentState<'k> {
    pub fn build(steps: &[EmbeddingVector], key_steps: &'k [KeyStep]) -> Result<Self> {
        let mut similarity = Vec::with_capacity(steps.len());
        let mut best_member = Vec::with_capacity(steps.len());
        for g in steps {
            let (row, members): (Vec<f64>, Vec<&EmbeddedSentence>) = key_steps
                .iter()
                .map(|k| step_cluster_similarity(g, k))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            similarity.push(row);
            best_member.push(members);
        }
        Ok(AlignmentState {
            similarity,
            best_member,
        })
    }
}

/// Greedy one-to-one assignment over a similarity matrix.
///
/// Returns `(row, column)` pairs sorted by row. Equivalent to repeatedly
/// taking the matrix argmax (ties: smallest row, then smallest column) while
/// it is strictly positive and zeroing that row and column.
pub fn greedy_assignment(similarity: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut entries: Vec<(usize, usize, f64)> = similarity
        .iter()
        .enumerate()
        .flat_map(|(a, row)| row.iter().enumerate().map(move |(b, &s)| (a, b, s)))
        .filter(|&(_, _, s)| s > 0.0)
        .collect();
    // Stable sort keeps row-major order among equal scores.
    entries.sort_by(|x, y| y.2.total_cmp(&x.2));
    let rows = similarity.len();
    let cols = similarity.iter().map(Vec::len).max().unwrap_or(0);
    let (mut row_used, mut col_used) = (vec![false; rows], vec![false; cols]);
    let mut pairs = Vec::new();
    for (a, b, _) in entries {
        if !row_used[a] && !col_used[b] {
            row_used[a] = true;
            col_used[b] = true;
            pairs.push((a, b));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Labels one summary sequence whose steps are already embedded.
pub fn label_sequence(video_id: &str, steps: &[EmbeddedSentence], key_steps: &[KeyStep]) -> Result<KeyStepSequence> {
    if key_steps.is_empty() {
        return Err(Error::invalid("no key steps to label with"));
    }
    let embeddings: Vec<EmbeddingVector> = steps.iter().map(|s| s.embedding.clone()).collect();
    let state = AlignmentState::build(&embeddings, key_steps)?;
    let items = greedy_assignment(&state.similarity)
        .into_iter()
        .map(|(a, b)| LabeledItem {
            key_step_id: key_steps[b].id,
            matched_sentence: state.best_member[a][b].sentence.clone(),
            source_position: steps[a].position,
        })
        .collect();
    Ok(KeyStepSequence {
        video_id: video_id.to_string(),
        items,
    })
}

/// Labels every transcript's embedded steps, grouped by video in first-seen
/// order. `video_order` lists every video to emit, including ones with no
/// embeddable steps.
pub fn label_all(
    video_order: &[String],
    sentences: &[EmbeddedSentence],
    key_steps: &[KeyStep],
) -> Result<Vec<KeyStepSequence>> {
    video_order
        .iter()
        .map(|vid| {
            let steps: Vec<EmbeddedSentence> = sentences.iter().filter(|s| &s.video_id == vid).cloned().collect();
            label_sequence(vid, &steps, key_steps)
        })
        .collect()
}
