//! Optional TOML configuration. Command-line flags (and their `FLAMENCO_*`
//! environment variables) override values from the file, which override the
//! built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use flamenco_core::analytics::LayoutConfig;
use flamenco_core::evaluation::{CorpusSpec, GroupKey};
use flamenco_core::micronet::TrainConfig;
use flamenco_core::segmenter::AnnotateConfig;

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
    pub grouping: GroupKey,
}

impl Default for CvSection {
    fn default() -> Self {
        Self { folds: 10, grouping: GroupKey::Song }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSection {
    pub components: usize,
}

impl Default for GmmSection {
    fn default() -> Self {
        Self { components: flamenco_core::gmm::DEFAULT_COMPONENTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    /// Neighbours inspected per query; 0 ranks the whole corpus.
    pub top_k: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self { top_k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub threshold: Option<f64>,
    pub corpus: CorpusSpec,
    pub train: TrainConfig,
    pub cv: CvSection,
    pub gmm: GmmSection,
    pub layout: LayoutConfig,
    pub annotate: AnnotateConfig,
    pub retrieval: RetrievalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
