//! `flamenco`: synthesize test corpora, train the classifiers, annotate
//! recordings and run corpus-level analyses.

mod commands;
mod config;
mod corpus;
mod exit;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flamenco_core::analytics::RetrievalMode;
use flamenco_core::evaluation::{Family, GroupKey};
use flamenco_core::Task;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  bad command line, flag value or configuration file
  3  a referenced input (file, directory, model) does not exist
  4  an input cannot be decoded or violates its format
  5  training, fitting or evaluation failed on the given data
  6  outputs could not be written

Every flag can also be set through an environment variable named
FLAMENCO_<FLAG> (upper case, dashes as underscores), e.g. FLAMENCO_SEED.";

#[derive(Debug, Parser)]
#[command(name = "flamenco", version, about, after_help = EXIT_CODES)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, env = "FLAMENCO_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, env = "FLAMENCO_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "FLAMENCO_WORKERS")]
    pub workers: Option<usize>,
    /// Decision threshold for commands that take one (vocal fraction for `discover`).
    #[arg(long, global = true, env = "FLAMENCO_THRESHOLD")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Vocal,
    Guitar,
    Palmas,
    All,
}

impl TaskArg {
    pub fn tasks(self) -> Vec<Task> {
        match self {
            TaskArg::Vocal => vec![Task::Vocal],
            TaskArg::Guitar => vec![Task::Guitar],
            TaskArg::Palmas => vec![Task::Palmas],
            TaskArg::All => Task::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Cnn,
    Gmm,
    Both,
}

impl FamilyArg {
    pub fn families(self) -> Vec<Family> {
        match self {
            FamilyArg::Cnn => vec![Family::Cnn],
            FamilyArg::Gmm => vec![Family::Gmm],
            FamilyArg::Both => Family::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Acappella,
    Instrumental,
}

impl From<ModeArg> for RetrievalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Acappella => RetrievalMode::Acappella,
            ModeArg::Instrumental => RetrievalMode::Instrumental,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Profile,
    Dtw,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupingArg {
    Song,
    Artist,
}

impl From<GroupingArg> for GroupKey {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Song => GroupKey::Song,
            GroupingArg::Artist => GroupKey::Artist,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled corpus (WAV, ground truth, metadata).
    Synth {
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
        #[arg(long, env = "FLAMENCO_CLIPS_PER_TASK")]
        clips_per_task: Option<usize>,
        #[arg(long, env = "FLAMENCO_MIN_SECS")]
        min_secs: Option<f64>,
        #[arg(long, env = "FLAMENCO_MAX_SECS")]
        max_secs: Option<f64>,
    },
    /// Train classifiers on a corpus with ground truth.
    Train {
        #[arg(long, env = "FLAMENCO_DATA")]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "all", env = "FLAMENCO_TASK")]
        task: TaskArg,
        #[arg(long, value_enum, default_value = "cnn", env = "FLAMENCO_FAMILY")]
        family: FamilyArg,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Annotate one WAV file or every recording of a corpus (JSON + SVG timeline).
    Annotate {
        #[arg(long, env = "FLAMENCO_MODELS")]
        models: PathBuf,
        #[arg(long, value_enum, default_value = "cnn", env = "FLAMENCO_FAMILY")]
        family: FamilyArg,
        /// A single WAV file.
        #[arg(long, env = "FLAMENCO_INPUT", conflicts_with = "data", required_unless_present = "data")]
        input: Option<PathBuf>,
        /// A corpus directory with metadata.csv.
        #[arg(long, env = "FLAMENCO_DATA")]
        data: Option<PathBuf>,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Dump CNN activations for the feature image nearest a time instant.
    Inspect {
        #[arg(long, env = "FLAMENCO_MODEL")]
        model: PathBuf,
        #[arg(long, env = "FLAMENCO_INPUT")]
        input: PathBuf,
        /// Seconds into the recording.
        #[arg(long, default_value_t = 0.0, env = "FLAMENCO_TIME")]
        time: f64,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Corpus-wide and per-style instrumentation statistics.
    Stats {
        #[arg(long, env = "FLAMENCO_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "FLAMENCO_METADATA")]
        metadata: PathBuf,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Retrieve a cappella or instrumental recordings by vocal fraction.
    Discover {
        #[arg(long, env = "FLAMENCO_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "FLAMENCO_METADATA")]
        metadata: PathBuf,
        #[arg(long, value_enum, default_value = "acappella", env = "FLAMENCO_MODE")]
        mode: ModeArg,
        /// CSV with columns id,label (1 = relevant) for precision curves.
        #[arg(long, env = "FLAMENCO_LABELS")]
        labels: Option<PathBuf>,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Scatter data, distance matrices and 2-d layouts of the corpus.
    Similarity {
        #[arg(long, env = "FLAMENCO_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "FLAMENCO_METADATA")]
        metadata: PathBuf,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Style retrieval by nearest neighbours (mean reciprocal rank per style).
    Retrieve {
        #[arg(long, env = "FLAMENCO_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "FLAMENCO_METADATA")]
        metadata: PathBuf,
        #[arg(long, value_enum, default_value = "both", env = "FLAMENCO_METRIC")]
        metric: MetricArg,
        /// Neighbours inspected per query; 0 ranks the whole corpus.
        #[arg(long, env = "FLAMENCO_TOP_K")]
        top_k: Option<usize>,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Pitch-class profiles, mode-template correlations and their densities.
    Tonality {
        /// Corpus directory with metadata.csv and audio.
        #[arg(long, env = "FLAMENCO_DATA")]
        data: PathBuf,
        #[arg(long, env = "FLAMENCO_ANNOTATIONS")]
        annotations: PathBuf,
        /// Style whose recordings define the flamenco-mode template.
        #[arg(long, env = "FLAMENCO_TEMPLATE_STYLE", required_unless_present = "flamenco_template")]
        template_style: Option<String>,
        /// Use this template file instead of deriving one.
        #[arg(long, env = "FLAMENCO_FLAMENCO_TEMPLATE")]
        flamenco_template: Option<PathBuf>,
        /// Major template file; defaults to the bundled one.
        #[arg(long, env = "FLAMENCO_MAJOR_TEMPLATE")]
        major_template: Option<PathBuf>,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
    /// Grouped k-fold cross-validation of the classifiers.
    Evaluate {
        #[arg(long, env = "FLAMENCO_DATA")]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "all", env = "FLAMENCO_TASK")]
        task: TaskArg,
        #[arg(long, value_enum, default_value = "both", env = "FLAMENCO_FAMILY")]
        family: FamilyArg,
        #[arg(long, env = "FLAMENCO_FOLDS")]
        folds: Option<usize>,
        #[arg(long, value_enum, env = "FLAMENCO_GROUPING")]
        grouping: Option<GroupingArg>,
        /// Use every clip for every task, not only the clips planned around it.
        #[arg(long, env = "FLAMENCO_ALL_CLIPS")]
        all_clips: bool,
        #[arg(long, env = "FLAMENCO_OUT")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
