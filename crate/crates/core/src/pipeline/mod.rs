//! End-to-end orchestration: summarize, cluster, label, rank, infer.
//!
//! Every stage persists its output under the run's output directory as
//! canonical JSON, so any stage can be re-run from the files of the stage
//! before it.

mod config;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

pub use config::{LabelSource, PathsConfig, PipelineConfig};
pub use io::{canonical_json, read_json, write_json, write_text};

use crate::cluster::{cluster_sentences, embed_sequences, EmbeddedSentence, KeyStep, KeyStepRecord};
use crate::dot::export_dot;
use crate::graphinfer::{infer_graph, TaskGraph};
use crate::label::{label_all, KeyStepSequence};
use crate::providers::{
    BigramScorer, Completer, Embedder, FixtureCompleter, HttpTransport, LikelihoodScorer, ProviderConfig, ProviderKind,
    RemoteClient, RemoteCompleter, RemoteEmbedder, RemoteScorer, Transport, TrigramEmbedder,
};
use crate::rank::{rank_all, RankRecord};
use crate::summarize::{summarize_all, transcript_sentences, SummaryStepSequence, Transcript};
use crate::{Error, Result};

pub const SUMMARIES_FILE: &str = "summaries.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SEQUENCES_FILE: &str = "sequences.json";
pub const RANKING_FILE: &str = "ranking.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const DOT_FILE: &str = "graph.dot";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Summarize,
    Cluster,
    Label,
    Rank,
    Graph,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Summarize => "summarize",
            Stage::Cluster => "cluster",
            Stage::Label => "label",
            Stage::Rank => "rank",
            Stage::Graph => "graph",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub fn http_transport() -> Arc<dyn Transport> {
    Arc::new(HttpTransport::new(Duration::from_secs(120)))
}

fn fixture_path(cfg: &ProviderConfig, what: &str) -> Result<PathBuf> {
    cfg.fixture_path
        .clone()
        .ok_or_else(|| Error::Config(format!("fixture {what} needs fixture_path")))
}

pub fn build_completer(cfg: &ProviderConfig, transport: &Arc<dyn Transport>) -> Result<Box<dyn Completer>> {
    Ok(match cfg.kind {
        ProviderKind::Fixture => Box::new(FixtureCompleter::from_file(&fixture_path(cfg, "completer")?)?),
        ProviderKind::Remote => Box::new(RemoteCompleter::new(RemoteClient::new(cfg, transport.clone())?)),
    })
}

pub fn build_embedder(cfg: &ProviderConfig, transport: &Arc<dyn Transport>) -> Result<Box<dyn Embedder>> {
    Ok(match cfg.kind {
        ProviderKind::Fixture => Box::new(TrigramEmbedder),
        ProviderKind::Remote => Box::new(RemoteEmbedder::new(RemoteClient::new(cfg, transport.clone())?)),
    })
}

/// The fixture scorer trains on `fixture_path` when set, else on
/// `fallback_corpus`.
pub fn build_scorer(
    cfg: &ProviderConfig,
    transport: &Arc<dyn Transport>,
    fallback_corpus: &[String],
) -> Result<Box<dyn LikelihoodScorer>> {
    Ok(match (cfg.kind, &cfg.fixture_path) {
        (ProviderKind::Fixture, Some(p)) => Box::new(BigramScorer::from_file(p)?),
        (ProviderKind::Fixture, None) => Box::new(BigramScorer::fit(fallback_corpus)),
        (ProviderKind::Remote, _) => Box::new(RemoteScorer::new(RemoteClient::new(cfg, transport.clone())?)),
    })
}

/// Reads a JSON array of transcripts; video ids must be unique.
pub fn load_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    let transcripts: Vec<Transcript> = read_json(path)?;
    if transcripts.is_empty() {
        return Err(Error::invalid(format!("{} contains no transcripts", path.display())));
    }
    let mut seen = BTreeSet::new();
    for t in &transcripts {
        t.validate()?;
        if !seen.insert(t.video_id.as_str()) {
            return Err(Error::invalid(format!("duplicate video id {}", t.video_id)));
        }
    }
    Ok(transcripts)
}

/// The configured task name, else the transcripts' (first) task name.
pub fn task_name(cfg: &PipelineConfig, transcripts: &[Transcript]) -> Result<String> {
    if let Some(t) = &cfg.task {
        return Ok(t.clone());
    }
    let names: BTreeSet<&str> = transcripts.iter().map(|t| t.task_name.as_str()).collect();
    if names.len() > 1 {
        log::warn!("transcripts span {} task names; using the first", names.len());
    }
    transcripts
        .first()
        .map(|t| t.task_name.clone())
        .ok_or_else(|| Error::invalid("no transcripts"))
}

pub fn summarize_stage(
    cfg: &PipelineConfig,
    transcripts: &[Transcript],
    completer: &dyn Completer,
) -> Result<Vec<SummaryStepSequence>> {
    let out = summarize_all(transcripts, completer, &cfg.summarize, cfg.completion.max_parallel)?;
    if out.is_empty() {
        return Err(Error::invalid("no transcript produced any steps"));
    }
    Ok(out)
}

pub fn cluster_stage(
    cfg: &PipelineConfig,
    summaries: &[SummaryStepSequence],
    embedder: &dyn Embedder,
) -> Result<(Vec<EmbeddedSentence>, Vec<KeyStep>)> {
    let sentences = embed_sequences(summaries, embedder, cfg.embedding.max_parallel)?;
    let key_steps = cluster_sentences(&sentences, &cfg.cluster)?;
    Ok((sentences, key_steps))
}

/// Sentences to align with key steps, per the configured label source.
pub fn label_inputs(
    cfg: &PipelineConfig,
    summaries: &[SummaryStepSequence],
    transcripts: Option<&[Transcript]>,
) -> Result<Vec<SummaryStepSequence>> {
    match cfg.label_source {
        LabelSource::Summary => Ok(summaries.to_vec()),
        LabelSource::Asr => transcripts
            .map(|ts| ts.iter().map(transcript_sentences).collect())
            .ok_or_else(|| Error::invalid("labeling transcript sentences requires the transcripts")),
    }
}

pub fn label_stage(
    cfg: &PipelineConfig,
    inputs: &[SummaryStepSequence],
    key_steps: &[KeyStep],
    embedder: &dyn Embedder,
) -> Result<Vec<KeyStepSequence>> {
    let sentences = embed_sequences(inputs, embedder, cfg.embedding.max_parallel)?;
    let order: Vec<String> = inputs.iter().map(|s| s.video_id.clone()).collect();
    label_all(&order, &sentences, key_steps)
}

pub fn key_step_labels(key_steps: &[KeyStepRecord]) -> BTreeMap<usize, String> {
    key_steps.iter().map(|k| (k.id, k.label.clone())).collect()
}

/// Labels of key steps `1..=m`; ids must be exactly that range.
pub fn ordered_labels(key_steps: &[KeyStepRecord]) -> Result<Vec<String>> {
    let labels = key_step_labels(key_steps);
    if labels.keys().copied().ne(1..=labels.len()) {
        return Err(Error::invalid("key step ids must be exactly 1..=m"));
    }
    Ok(labels.into_values().collect())
}

pub fn rank_stage(
    cfg: &PipelineConfig,
    task: &str,
    sequences: &[KeyStepSequence],
    key_steps: &[KeyStepRecord],
    scorer: &dyn LikelihoodScorer,
) -> Result<Vec<RankRecord>> {
    let labels = key_step_labels(key_steps);
    let (kept, records) = rank_all(sequences, task, &labels, scorer, &cfg.rank, cfg.likelihood.max_parallel)?;
    log::info!("kept {} of {} sequences", kept.len(), sequences.len());
    Ok(records)
}

/// Sequences marked kept, in their original order.
pub fn kept_sequences(sequences: &[KeyStepSequence], ranking: &[RankRecord]) -> Vec<KeyStepSequence> {
    let kept: BTreeSet<&str> = ranking.iter().filter(|r| r.kept).map(|r| r.video_id.as_str()).collect();
    sequences
        .iter()
        .filter(|s| kept.contains(s.video_id.as_str()))
        .cloned()
        .collect()
}

pub fn graph_stage(cfg: &PipelineConfig, kept: &[KeyStepSequence], key_steps: &[KeyStepRecord]) -> Result<TaskGraph> {
    infer_graph(kept, &ordered_labels(key_steps)?, &cfg.infer_config())
}

/// Writes the graph JSON and its DOT rendering.
pub fn write_graph(out_dir: &Path, graph: &TaskGraph) -> Result<()> {
    write_json(&out_dir.join(GRAPH_FILE), &graph.to_file())?;
    write_text(&out_dir.join(DOT_FILE), &export_dot(graph))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summaries: Vec<SummaryStepSequence>,
    pub key_steps: Vec<KeyStepRecord>,
    pub sequences: Vec<KeyStepSequence>,
    pub ranking: Vec<RankRecord>,
    pub graph: TaskGraph,
}

/// Runs every stage with providers talking through `transport`, writing all
/// stage files under the configured output directory.
pub fn run(cfg: &PipelineConfig, transport: &Arc<dyn Transport>) -> std::result::Result<RunOutput, StageError> {
    cfg.validate().at(Stage::Config)?;
    let out_dir = &cfg.paths.out_dir;
    let transcripts_path = cfg
        .paths
        .transcripts
        .as_deref()
        .ok_or_else(|| Error::Config("no transcripts path configured".into()))
        .at(Stage::Config)?;
    let transcripts = load_transcripts(transcripts_path).at(Stage::Config)?;
    let task = task_name(cfg, &transcripts).at(Stage::Config)?;

    let completer = build_completer(&cfg.completion, transport).at(Stage::Summarize)?;
    let summaries = summarize_stage(cfg, &transcripts, completer.as_ref()).at(Stage::Summarize)?;
    write_json(&out_dir.join(SUMMARIES_FILE), &summaries).at(Stage::Summarize)?;
    log::info!("summarized {} of {} transcripts", summaries.len(), transcripts.len());

    let embedder = build_embedder(&cfg.embedding, transport).at(Stage::Cluster)?;
    let (sentences, key_steps) = cluster_stage(cfg, &summaries, embedder.as_ref()).at(Stage::Cluster)?;
    let records: Vec<KeyStepRecord> = key_steps.iter().map(KeyStep::to_record).collect();
    write_json(&out_dir.join(CLUSTERS_FILE), &records).at(Stage::Cluster)?;
    log::info!("{} key steps", records.len());

    let sequences = match cfg.label_source {
        LabelSource::Summary => {
            let order: Vec<String> = summaries.iter().map(|s| s.video_id.clone()).collect();
            label_all(&order, &sentences, &key_steps)
        }
        LabelSource::Asr => label_inputs(cfg, &summaries, Some(&transcripts))
            .and_then(|inputs| label_stage(cfg, &inputs, &key_steps, embedder.as_ref())),
    }
    .at(Stage::Label)?;
    write_json(&out_dir.join(SEQUENCES_FILE), &sequences).at(Stage::Label)?;

    let corpus: Vec<String> = transcripts.iter().map(|t| t.text.clone()).collect();
    let scorer = build_scorer(&cfg.likelihood, transport, &corpus).at(Stage::Rank)?;
    let ranking = rank_stage(cfg, &task, &sequences, &records, scorer.as_ref()).at(Stage::Rank)?;
    write_json(&out_dir.join(RANKING_FILE), &ranking).at(Stage::Rank)?;

    let kept = kept_sequences(&sequences, &ranking);
    let graph = graph_stage(cfg, &kept, &records).at(Stage::Graph)?;
    write_graph(out_dir, &graph).at(Stage::Graph)?;

    Ok(RunOutput {
        summaries,
        key_steps: records,
        sequences,
        ranking,
        graph,
    })
}
