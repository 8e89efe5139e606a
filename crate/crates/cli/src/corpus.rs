//! On-disk corpus layout shared by the commands.
//!
//! ```text
//! <root>/metadata.csv                 id,path,style,artist_id,anthology
//! <root>/plans.json                   synthesis plans (synthetic corpora only)
//! <root>/audio/<id>.wav
//! <root>/truth/<id>.truth.json        exact section layout
//! <root>/truth/<id>.reference.json    the same layout as an annotation file
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;

use flamenco_core::analytics::{CorpusIndex, CorpusRecord};
use flamenco_core::audio::{load_wav, AudioClip};
use flamenco_core::evaluation::{ClipPlan, GroundTruth};
use flamenco_core::segmenter::AnnotationFile;

use crate::exit::CliError;

pub const METADATA: &str = "metadata.csv";
pub const PLANS: &str = "plans.json";

pub fn require(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()).into())
    }
}

pub fn truth_rel(id: &str) -> String {
    format!("truth/{id}.truth.json")
}

pub fn reference_rel(id: &str) -> String {
    format!("truth/{id}.reference.json")
}

pub struct Corpus {
    pub root: PathBuf,
    pub index: CorpusIndex,
}

impl Corpus {
    pub fn open(root: &Path) -> anyhow::Result<Self> {
        require(root)?;
        let meta = root.join(METADATA);
        require(&meta)?;
        let index = CorpusIndex::load(&meta).with_context(|| format!("reading {}", meta.display()))?;
        Ok(Self { root: root.to_path_buf(), index })
    }

    pub fn audio_path(&self, r: &CorpusRecord) -> PathBuf {
        if r.path.is_absolute() {
            r.path.clone()
        } else {
            self.root.join(&r.path)
        }
    }

    pub fn audio(&self, r: &CorpusRecord) -> anyhow::Result<AudioClip> {
        let p = self.audio_path(r);
        require(&p)?;
        load_wav(&p).with_context(|| format!("loading {}", p.display()))
    }

    pub fn truth(&self, id: &str) -> anyhow::Result<GroundTruth> {
        let p = self.root.join(truth_rel(id));
        require(&p)?;
        let text = std::fs::read_to_string(&p)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    /// Synthesis plans, if the corpus was generated by `synth`.
    pub fn plans(&self) -> anyhow::Result<Option<Vec<ClipPlan>>> {
        let p = self.root.join(PLANS);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p)?;
        Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?))
    }
}

/// Annotation files for the records of `index`, in index order. Records
/// without a file are skipped with a warning.
pub fn load_annotations<'a>(
    dir: &Path,
    index: &'a CorpusIndex,
) -> anyhow::Result<Vec<(&'a CorpusRecord, AnnotationFile)>> {
    require(dir)?;
    let mut out = Vec::new();
    for r in &index.records {
        let p = dir.join(format!("{}.json", r.id));
        if !p.exists() {
            log::warn!("no annotation for {}; skipped", r.id);
            continue;
        }
        let file = AnnotationFile::load(&p).with_context(|| format!("loading {}", p.display()))?;
        out.push((r, file));
    }
    Ok(out)
}
