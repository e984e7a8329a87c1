use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterConfig;
use crate::graphinfer::{AccuracyMode, InferConfig};
use crate::providers::ProviderConfig;
use crate::rank::RankConfig;
use crate::summarize::SummarizeConfig;
use crate::{Error, Result};

/// Which sentences are aligned to key steps: the summarized step lists, or
/// the raw transcript sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    #[default]
    Summary,
    Asr,
}

impl std::str::FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summary" => Ok(LabelSource::Summary),
            "asr" => Ok(LabelSource::Asr),
            other => Err(Error::invalid(format!("unknown label source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub transcripts: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            transcripts: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Whole-pipeline configuration, one TOML document with a section per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Task name used in prompts; defaults to the transcripts' task.
    pub task: Option<String>,
    pub label_source: LabelSource,
    pub negative_weight: f64,
    pub accuracy_mode: AccuracyMode,
    pub paths: PathsConfig,
    pub completion: ProviderConfig,
    pub embedding: ProviderConfig,
    pub likelihood: ProviderConfig,
    pub summarize: SummarizeConfig,
    pub cluster: ClusterConfig,
    pub rank: RankConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            task: None,
            label_source: LabelSource::Summary,
            negative_weight: InferConfig::default().negative_weight,
            accuracy_mode: AccuracyMode::Exact,
            paths: PathsConfig::default(),
            completion: ProviderConfig::default(),
            embedding: ProviderConfig::default(),
            likelihood: ProviderConfig::default(),
            summarize: SummarizeConfig::default(),
            cluster: ClusterConfig::default(),
            rank: RankConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(t) = cfg.paths.transcripts.as_mut() {
            rebase(base, t);
        }
        rebase(base, &mut cfg.paths.out_dir);
        for p in cfg.providers_mut() {
            if let Some(f) = p.fixture_path.as_mut() {
                rebase(base, f);
            }
            if let Some(c) = p.cache_dir.as_mut() {
                rebase(base, c);
            }
        }
        Ok(cfg)
    }

    pub fn providers_mut(&mut self) -> [&mut ProviderConfig; 3] {
        [&mut self.completion, &mut self.embedding, &mut self.likelihood]
    }

    pub fn infer_config(&self) -> InferConfig {
        InferConfig {
            negative_weight: self.negative_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.completion, &self.embedding, &self.likelihood] {
            p.validate()?;
        }
        self.cluster.validate()?;
        self.rank.validate()?;
        self.infer_config().validate()?;
        if !self.summarize.template.contains("{task}") {
            log::warn!("summarize template has no {{task}} placeholder");
        }
        Ok(())
    }
}
