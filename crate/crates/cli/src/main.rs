use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use taskgraph_core::cluster::{KeyStep, KeyStepRecord};
use taskgraph_core::dot::export_dot;
use taskgraph_core::graphinfer::{eval_accuracy, infer_graph, AccuracyMode, TaskGraph};
use taskgraph_core::label::KeyStepSequence;
use taskgraph_core::pipeline::{self as pl, LabelSource, PipelineConfig, Stage};
use taskgraph_core::providers::{ProviderKind, Transport};
use taskgraph_core::rank::RankRecord;
use taskgraph_core::simulate::{generate_dataset, GroundTruthGraph, RolloutConfig};
use taskgraph_core::summarize::{SummaryStepSequence, Transcript};
use taskgraph_core::Error;

#[derive(Parser)]
#[command(
    name = "taskgraph",
    version,
    about = "Induce task graphs from instructional video transcripts"
)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Args)]
struct GlobalOpts {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON array of {task, video_id, text}.
    #[arg(long, global = true)]
    transcripts: Option<PathBuf>,
    /// Directory for stage outputs [default: out].
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// `remote` or `fixture`; applies to all three providers.
    #[arg(long, global = true)]
    provider: Option<ProviderKind>,
    /// Response cache for remote providers.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Cosine needed for an edge in the similarity graph [default: 0.9].
    #[arg(long, global = true)]
    sim_threshold: Option<f64>,
    /// Smallest clique kept as a key step [default: 6].
    #[arg(long, global = true)]
    min_clique: Option<usize>,
    /// Mean cosine needed to merge two clusters [default: 0.75].
    #[arg(long, global = true)]
    merge_sim: Option<f64>,
    /// Video overlap needed to merge two clusters [default: 0.10].
    #[arg(long, global = true)]
    merge_overlap: Option<f64>,
    /// Fraction of sequences kept after ranking [default: 0.75].
    #[arg(long, global = true)]
    keep_fraction: Option<f64>,
    /// Weight of assumed-ineligible examples [default: 0.3].
    #[arg(long, global = true)]
    negative_weight: Option<f64>,
    /// Seed for sampled accuracy and simulation [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `summary` or `asr` (raw transcript sentences).
    #[arg(long, global = true)]
    label_source: Option<LabelSource>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract step lists from transcripts.
    Summarize,
    /// Group summary steps into key steps.
    Cluster {
        /// Defaults to summaries.json in the output directory.
        #[arg(long)]
        summaries: Option<PathBuf>,
    },
    /// Re-express each video as a key step sequence.
    Label {
        #[arg(long)]
        summaries: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Score sequences and mark the kept fraction.
    Rank {
        #[arg(long)]
        sequences: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Task name for the scoring prompt; defaults to the transcripts' task.
        #[arg(long)]
        task: Option<String>,
    },
    /// Infer the task graph from (kept) sequences.
    Graph {
        #[arg(long)]
        sequences: Option<PathBuf>,
        /// Restricts inference to kept sequences when given.
        #[arg(long)]
        ranking: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Number of key steps, when no clusters file is given.
        #[arg(long, conflicts_with = "clusters")]
        m: Option<usize>,
    },
    /// Graph prediction accuracy of one graph against another.
    Eval {
        /// Predicted graph JSON.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth graph JSON.
        #[arg(long)]
        truth: PathBuf,
        /// `exact` or `sampled`; defaults to the configured mode.
        #[arg(long)]
        mode: Option<AccuracyMode>,
    },
    /// Sample key step sequences from a ground-truth graph.
    Simulate {
        /// Ground-truth graph JSON.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 60)]
        count: usize,
        /// Chance of leaving each executed step out of the recorded sequence.
        #[arg(long, default_value_t = 0.0)]
        drop_prob: f64,
        /// Output sequences JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage.
    Run,
    /// Render a graph file as Graphviz DOT.
    ExportDot {
        /// Graph JSON to render.
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    stage: Option<Stage>,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { stage: None, error }
    }
}

impl From<pl::StageError> for Failure {
    fn from(e: pl::StageError) -> Self {
        Failure {
            stage: Some(e.stage),
            error: e.source,
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, Failure>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            stage: Some(stage),
            error,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Transport(_) | Error::MissingFixture { .. } => 3,
        Error::InvalidInput(_)
        | Error::Io { .. }
        | Error::Json { .. }
        | Error::Config(_)
        | Error::InvalidGraph(_)
        | Error::CyclicGraph { .. } => 2,
        _ => 1,
    }
}

fn load_config(o: &GlobalOpts) -> Result<PipelineConfig, Error> {
    let mut cfg = match &o.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = &o.transcripts {
        cfg.paths.transcripts = Some(t.clone());
    }
    if let Some(d) = &o.out_dir {
        cfg.paths.out_dir = d.clone();
    }
    for p in cfg.providers_mut() {
        if let Some(k) = o.provider {
            p.kind = k;
        }
        if let Some(c) = &o.cache_dir {
            p.cache_dir = Some(c.clone());
        }
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.cluster.sim_threshold, o.sim_threshold);
    set(&mut cfg.cluster.merge_sim_threshold, o.merge_sim);
    set(&mut cfg.cluster.merge_overlap_threshold, o.merge_overlap);
    set(&mut cfg.rank.keep_fraction, o.keep_fraction);
    set(&mut cfg.negative_weight, o.negative_weight);
    if let Some(n) = o.min_clique {
        cfg.cluster.min_clique_size = n;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(l) = o.label_source {
        cfg.label_source = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn transcripts(cfg: &PipelineConfig) -> Result<Vec<Transcript>, Error> {
    let path = cfg
        .paths
        .transcripts
        .as_deref()
        .ok_or_else(|| Error::invalid("--transcripts is required"))?;
    pl::load_transcripts(path)
}

fn input(explicit: &Option<PathBuf>, cfg: &PipelineConfig, file: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.paths.out_dir.join(file))
}

fn key_steps(
    records: &[KeyStepRecord],
    embedder: &dyn taskgraph_core::providers::Embedder,
) -> Result<Vec<KeyStep>, Error> {
    records.iter().map(|r| KeyStep::from_record(r, embedder)).collect()
}

fn write_graph(out_dir: &Path, graph: &TaskGraph) -> Result<(), Error> {
    pl::write_graph(out_dir, graph)?;
    eprintln!(
        "wrote {} and {}",
        out_dir.join(pl::GRAPH_FILE).display(),
        out_dir.join(pl::DOT_FILE).display()
    );
    Ok(())
}

fn execute(cli: Cli, transport: Arc<dyn Transport>) -> Result<(), Failure> {
    let cfg = load_config(&cli.opts).at(Stage::Config)?;
    let out = cfg.paths.out_dir.clone();
    match cli.command {
        Command::Summarize => {
            let ts = transcripts(&cfg).at(Stage::Config)?;
            let completer = pl::build_completer(&cfg.completion, &transport).at(Stage::Summarize)?;
            let summaries = pl::summarize_stage(&cfg, &ts, completer.as_ref()).at(Stage::Summarize)?;
            pl::write_json(&out.join(pl::SUMMARIES_FILE), &summaries).at(Stage::Summarize)?;
        }
        Command::Cluster { summaries } => {
            let summaries: Vec<SummaryStepSequence> =
                pl::read_json(&input(&summaries, &cfg, pl::SUMMARIES_FILE)).at(Stage::Cluster)?;
            let embedder = pl::build_embedder(&cfg.embedding, &transport).at(Stage::Cluster)?;
            let (_, steps) = pl::cluster_stage(&cfg, &summaries, embedder.as_ref()).at(Stage::Cluster)?;
            let records: Vec<KeyStepRecord> = steps.iter().map(KeyStep::to_record).collect();
            pl::write_json(&out.join(pl::CLUSTERS_FILE), &records).at(Stage::Cluster)?;
        }
        Command::Label { summaries, clusters } => {
            let summaries: Vec<SummaryStepSequence> =
                pl::read_json(&input(&summaries, &cfg, pl::SUMMARIES_FILE)).at(Stage::Label)?;
            let records: Vec<KeyStepRecord> =
                pl::read_json(&input(&clusters, &cfg, pl::CLUSTERS_FILE)).at(Stage::Label)?;
            let ts = match cfg.label_source {
                LabelSource::Asr => Some(transcripts(&cfg).at(Stage::Label)?),
                LabelSource::Summary => None,
            };
            let embedder = pl::build_embedder(&cfg.embedding, &transport).at(Stage::Label)?;
            let steps = key_steps(&records, embedder.as_ref()).at(Stage::Label)?;
            let inputs = pl::label_inputs(&cfg, &summaries, ts.as_deref()).at(Stage::Label)?;
            let seqs = pl::label_stage(&cfg, &inputs, &steps, embedder.as_ref()).at(Stage::Label)?;
            pl::write_json(&out.join(pl::SEQUENCES_FILE), &seqs).at(Stage::Label)?;
        }
        Command::Rank {
            sequences,
            clusters,
            task,
        } => {
            let seqs: Vec<KeyStepSequence> =
                pl::read_json(&input(&sequences, &cfg, pl::SEQUENCES_FILE)).at(Stage::Rank)?;
            let records: Vec<KeyStepRecord> =
                pl::read_json(&input(&clusters, &cfg, pl::CLUSTERS_FILE)).at(Stage::Rank)?;
            let ts = match (&cfg.paths.transcripts, &cfg.task, &task) {
                (None, Some(_), _) | (None, _, Some(_)) => Vec::new(),
                _ => transcripts(&cfg).at(Stage::Rank)?,
            };
            let task = match task {
                Some(t) => t,
                None => pl::task_name(&cfg, &ts).at(Stage::Rank)?,
            };
            let corpus: Vec<String> = ts.iter().map(|t| t.text.clone()).collect();
            let scorer = pl::build_scorer(&cfg.likelihood, &transport, &corpus).at(Stage::Rank)?;
            let ranking = pl::rank_stage(&cfg, &task, &seqs, &records, scorer.as_ref()).at(Stage::Rank)?;
            pl::write_json(&out.join(pl::RANKING_FILE), &ranking).at(Stage::Rank)?;
        }
        Command::Graph {
            sequences,
            ranking,
            clusters,
            m,
        } => {
            let seqs: Vec<KeyStepSequence> =
                pl::read_json(&input(&sequences, &cfg, pl::SEQUENCES_FILE)).at(Stage::Graph)?;
            let kept = match ranking {
                Some(p) => pl::kept_sequences(&seqs, &pl::read_json::<Vec<RankRecord>>(&p).at(Stage::Graph)?),
                None => seqs,
            };
            let graph = match m {
                Some(m) => {
                    let labels: Vec<String> = (1..=m).map(|p| format!("k{p}")).collect();
                    infer_graph(&kept, &labels, &cfg.infer_config()).at(Stage::Graph)?
                }
                None => {
                    let records: Vec<KeyStepRecord> =
                        pl::read_json(&input(&clusters, &cfg, pl::CLUSTERS_FILE)).at(Stage::Graph)?;
                    pl::graph_stage(&cfg, &kept, &records).at(Stage::Graph)?
                }
            };
            write_graph(&out, &graph).at(Stage::Graph)?;
        }
        Command::Eval { pred, truth, mode } => {
            let pred = TaskGraph::load(&pred)?;
            let truth = TaskGraph::load(&truth)?;
            let acc = eval_accuracy(&pred, &truth, mode.unwrap_or(cfg.accuracy_mode), cfg.seed)?;
            println!("{acc:.4}");
        }
        Command::Simulate {
            graph,
            count,
            drop_prob,
            out,
        } => {
            let g = GroundTruthGraph::load(&graph)?;
            let rc = RolloutConfig {
                count,
                seed: cfg.seed,
                drop_prob,
            };
            let data = generate_dataset(&g, &rc)?;
            pl::write_json(&out, &data)?;
        }
        Command::Run => {
            let result = pl::run(&cfg, &transport)?;
            eprintln!(
                "{} key steps, {} of {} sequences kept; outputs in {}",
                result.graph.m(),
                result.ranking.iter().filter(|r| r.kept).count(),
                result.sequences.len(),
                out.display()
            );
        }
        Command::ExportDot { graph, out } => {
            let dot = export_dot(&TaskGraph::load(&graph)?);
            match out {
                Some(p) => pl::write_text(&p, &dot)?,
                None => print!("{dot}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli, pl::http_transport()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match f.stage {
                Some(stage) => eprintln!("error in {stage} stage: {}", f.error),
                None => eprintln!("error: {}", f.error),
            }
            ExitCode::from(exit_code(&f.error))
        }
    }
}
