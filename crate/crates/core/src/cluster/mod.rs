//! Key step identification.
//!
//! Summary steps from all transcripts are embedded and connected when their
//! cosine similarity reaches `sim_threshold`. Maximal cliques of at least
//! `min_clique_size` sentences become candidate clusters; clusters that are
//! similar to each other but rarely co-occur in one transcript are merged.

mod cliques;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use cliques::{build_similarity_graph, enumerate_maximal_cliques, filter_cliques, SimilarityGraph};

use crate::providers::{Embedder, EmbeddingVector};
use crate::summarize::SummaryStepSequence;
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub sim_threshold: f64,
    pub min_clique_size: usize,
    pub merge_sim_threshold: f64,
    pub merge_overlap_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            sim_threshold: 0.9,
            min_clique_size: 6,
            merge_sim_threshold: 0.75,
            merge_overlap_threshold: 0.10,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sim_threshold", self.sim_threshold),
            ("merge_sim_threshold", self.merge_sim_threshold),
            ("merge_overlap_threshold", self.merge_overlap_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.min_clique_size < 2 {
            return Err(Error::Config("min_clique_size must be at least 2".into()));
        }
        Ok(())
    }
}

/// A summary step together with its embedding and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSentence {
    pub sentence: String,
    pub video_id: String,
    pub position: usize,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyStep {
    /// 1-based.
    pub id: usize,
    pub label: String,
    pub members: Vec<EmbeddedSentence>,
}

impl KeyStep {
    pub fn videos(&self) -> BTreeSet<&str> {
        self.members.iter().map(|m| m.video_id.as_str()).collect()
    }

    pub fn to_record(&self) -> KeyStepRecord {
        KeyStepRecord {
            id: self.id,
            label: self.label.clone(),
            members: self
                .members
                .iter()
                .map(|m| MemberRecord {
                    sentence: m.sentence.clone(),
                    video_id: m.video_id.clone(),
                    position: m.position,
                })
                .collect(),
        }
    }

    /// Rebuilds a key step from its persisted form by re-embedding members.
    pub fn from_record(rec: &KeyStepRecord, embedder: &dyn Embedder) -> Result<Self> {
        if rec.members.is_empty() {
            return Err(Error::invalid(format!("key step {} has no members", rec.id)));
        }
        let members = rec
            .members
            .iter()
            .map(|m| {
                Ok(EmbeddedSentence {
                    sentence: m.sentence.clone(),
                    video_id: m.video_id.clone(),
                    position: m.position,
                    embedding: embedder.embed(&m.sentence)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KeyStep {
            id: rec.id,
            label: rec.label.clone(),
            members,
        })
    }
}

/// On-disk cluster entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyStepRecord {
    pub id: usize,
    pub label: String,
    pub members: Vec<MemberRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub sentence: String,
    pub video_id: String,
    pub position: usize,
}

/// Fraction of transcripts in which both clusters occur, relative to the
/// smaller of the two video supports.
pub fn sequence_overlap(a: &KeyStep, b: &KeyStep) -> f64 {
    overlap_of(&a.videos(), &b.videos())
}

fn overlap_of(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let denom = a.len().min(b.len());
    if denom == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / denom as f64
}

/// Working cluster during merging: sentence indices plus the running sum of
/// member embeddings, so mean pairwise cosine between clusters `A` and `B`
/// is `sum_A · sum_B / (|A| |B|)`.
struct Group<'a> {
    indices: Vec<usize>,
    sum: Vec<f64>,
    videos: BTreeSet<&'a str>,
}

impl<'a> Group<'a> {
    fn new(indices: Vec<usize>, sentences: &'a [EmbeddedSentence]) -> Self {
        let dim = sentences.first().map_or(0, |s| s.embedding.dimension());
        let mut sum = vec![0.0; dim];
        let mut videos = BTreeSet::new();
        for &i in &indices {
            for (acc, x) in sum.iter_mut().zip(sentences[i].embedding.components()) {
                *acc += x;
            }
            videos.insert(sentences[i].video_id.as_str());
        }
        Group { indices, sum, videos }
    }

    fn similarity(&self, other: &Group) -> f64 {
        let dot: f64 = self.sum.iter().zip(&other.sum).map(|(a, b)| a * b).sum();
        dot / (self.indices.len() * other.indices.len()) as f64
    }

    fn absorb(&mut self, other: Group<'a>) {
        self.indices.extend(other.indices);
        self.indices.sort_unstable();
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.videos.extend(other.videos);
    }
}

/// One merge performed by [`merge_clusters`], in terms of the cluster list
/// at that moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeEvent {
    pub kept: usize,
    pub absorbed: usize,
    pub similarity: f64,
    pub overlap: f64,
}

/// Greedily merges the most similar qualifying pair until none qualifies.
///
/// `clusters` are disjoint lists of indices into `sentences`. The result is
/// ordered by each cluster's smallest sentence index and numbered from 1.
pub fn merge_clusters(
    clusters: &[Vec<usize>],
    sentences: &[EmbeddedSentence],
    config: &ClusterConfig,
) -> (Vec<KeyStep>, Vec<MergeEvent>) {
    let mut groups: Vec<Group> = clusters
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            Group::new(c, sentences)
        })
        .collect();
    let mut trace = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64, f64)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let sim = groups[i].similarity(&groups[j]);
                let overlap = overlap_of(&groups[i].videos, &groups[j].videos);
                if sim >= config.merge_sim_threshold
                    && overlap <= config.merge_overlap_threshold
                    && best.is_none_or(|(_, _, s, _)| sim > s)
                {
                    best = Some((i, j, sim, overlap));
                }
            }
        }
        let Some((i, j, similarity, overlap)) = best else { break };
        let absorbed = groups.remove(j);
        groups[i].absorb(absorbed);
        trace.push(MergeEvent {
            kept: i,
            absorbed: j,
            similarity,
            overlap,
        });
    }
    groups.sort_by_key(|g| g.indices[0]);
    let steps = groups
        .into_iter()
        .enumerate()
        .map(|(k, g)| {
            let medoid = g
                .indices
                .iter()
                .copied()
                .fold(None::<(usize, f64)>, |best, idx| {
                    let score: f64 = sentences[idx]
                        .embedding
                        .components()
                        .iter()
                        .zip(&g.sum)
                        .map(|(a, b)| a * b)
                        .sum();
                    match best {
                        Some((_, s)) if s >= score => best,
                        _ => Some((idx, score)),
                    }
                })
                .map(|(idx, _)| idx)
                .expect("groups are non-empty");
            KeyStep {
                id: k + 1,
                label: sentences[medoid].sentence.clone(),
                members: g.indices.iter().map(|&i| sentences[i].clone()).collect(),
            }
        })
        .collect();
    (steps, trace)
}

/// Embeds every summary step; sentences the embedder rejects as invalid are
/// skipped with a warning.
pub fn embed_sequences(
    sequences: &[SummaryStepSequence],
    embedder: &dyn Embedder,
    max_parallel: usize,
) -> Result<Vec<EmbeddedSentence>> {
    let flat: Vec<(&str, usize, &str)> = sequences
        .iter()
        .flat_map(|s| {
            s.steps
                .iter()
                .enumerate()
                .map(move |(pos, step)| (s.video_id.as_str(), pos, step.as_str()))
        })
        .collect();
    let embedded = par::bounded_map(&flat, max_parallel, |&(_, _, step)| embedder.embed(step));
    let mut out = Vec::with_capacity(flat.len());
    for ((video_id, position, sentence), emb) in flat.into_iter().zip(embedded) {
        match emb {
            Ok(embedding) => out.push(EmbeddedSentence {
                sentence: sentence.to_string(),
                video_id: video_id.to_string(),
                position,
                embedding,
            }),
            Err(Error::InvalidInput(msg)) => log::warn!("{video_id}#{position}: {msg}"),
            Err(e) => return Err(e),
        }
    }
    crate::providers::check_dimensions(out.iter().map(|s| &s.embedding))?;
    Ok(out)
}

/// Clusters pre-embedded sentences into key steps.
pub fn cluster_sentences(sentences: &[EmbeddedSentence], config: &ClusterConfig) -> Result<Vec<KeyStep>> {
    config.validate()?;
    let embeddings: Vec<EmbeddingVector> = sentences.iter().map(|s| s.embedding.clone()).collect();
    let graph = build_similarity_graph(&embeddings, config.sim_threshold)?;
    let cliques = enumerate_maximal_cliques(&graph);
    let kept = filter_cliques(&cliques, config.min_clique_size);
    log::info!(
        "{} sentences, {} edges, {} maximal cliques, {} retained",
        sentences.len(),
        graph.edge_count(),
        cliques.len(),
        kept.len()
    );
    let (steps, trace) = merge_clusters(&kept, sentences, config);
    for ev in &trace {
        log::debug!(
            "merged cluster {} into {} (sim {:.3}, overlap {:.3})",
            ev.absorbed,
            ev.kept,
            ev.similarity,
            ev.overlap
        );
    }
    if steps.is_empty() {
        return Err(Error::NoKeySteps);
    }
    Ok(steps)
}

pub fn identify_key_steps(
    sequences: &[SummaryStepSequence],
    embedder: &dyn Embedder,
    config: &ClusterConfig,
    max_parallel: usize,
) -> Result<Vec<KeyStep>> {
    if sequences.is_empty() {
        return Err(Error::invalid("no summary step sequences to cluster"));
    }
    let sentences = embed_sequences(sequences, embedder, max_parallel)?;
    cluster_sentences(&sentences, config)
}
