//! Frame-level metrics, grouped k-fold cross-validation and the synthetic
//! benchmark corpus.

mod synth;

pub use synth::{
    plan_corpus, synth_clip, synth_corpus, ClipPlan, CorpusSpec, GroundTruth, SectionClass, SectionPlan, SynthClip,
    TruthSection,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{prepare, AudioClip};
pub use crate::container::Family;
use crate::dsp::{mel_energies, mfcc_features, FRAME_LEN};
use crate::error::{Error, Result};
use crate::gmm::{features_at, GmmClassifier, DEFAULT_COMPONENTS};
use crate::images::{build_images, decision_time, image_count, FeatureImage};
use crate::micronet::{predict_sequence, train, TrainConfig, TrainOutcome};
use crate::segmenter::smooth_runs;
use crate::task::Task;

/// Precision, recall and F-measure on the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Nothing was predicted positive or nothing is positive; the undefined
    /// ratio is reported as 0.
    pub degenerate: bool,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if a + b > 0 { a as f64 / (a + b) as f64 } else { 0.0 };
        let (precision, recall) = (ratio(tp, fp), ratio(tp, fn_));
        let f_measure = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f_measure, tp, fp, fn_, degenerate: tp + fp == 0 || tp + fn_ == 0 }
    }
}

pub fn prf(predicted: &[bool], truth: &[bool]) -> Result<Prf> {
    if predicted.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} predictions", truth.len()),
            actual: format!("{}", predicted.len()),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Artist,
    Song,
}

/// Item ids per fold, each fold sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub grouping: GroupKey,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }
}

/// Groups are sorted, shuffled by `seed`, stably ordered by descending size
/// and dealt round-robin. Input order does not matter.
pub fn make_folds(items: &[(&str, &str)], k: usize, grouping: GroupKey, seed: u64) -> Result<FoldPlan> {
    let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for &(id, group) in items {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        groups.entry(group).or_default().push(id.to_string());
    }
    if k == 0 || groups.len() < k {
        return Err(Error::TooFewGroups { groups: groups.len(), folds: k });
    }
    let mut order: Vec<(&str, Vec<String>)> = groups.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|(_, ids)| std::cmp::Reverse(ids.len()));
    let mut folds = vec![Vec::new(); k];
    for (i, (_, ids)) in order.into_iter().enumerate() {
        folds[i % k].extend(ids);
    }
    folds.iter_mut().for_each(|f| f.sort());
    Ok(FoldPlan { grouping, folds })
}

/// One recording prepared for a single task.
#[derive(Debug, Clone)]
pub struct TaskRecording {
    pub id: String,
    pub group: String,
    /// The view the task's classifier reads: vocal channel, guitar channel or mono mix.
    pub signal: Vec<f32>,
    /// Target per decision instant; `None` where the task does not apply.
    pub labels: Vec<Option<bool>>,
}

impl TaskRecording {
    pub fn new(task: Task, id: &str, group: &str, clip: &AudioClip, truth: &GroundTruth) -> Result<Self> {
        let views = prepare(clip)?;
        let signal = match task {
            Task::Vocal => views.vocal,
            Task::Guitar => views.guitar,
            Task::Palmas => views.mono,
        };
        let labels = truth.labels(task, image_count(signal.len() / FRAME_LEN));
        Ok(Self { id: id.to_string(), group: group.to_string(), signal, labels })
    }
}

/// Recordings of one task.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task: Task,
    pub recordings: Vec<TaskRecording>,
}

impl TaskDataset {
    /// Build from synthetic clips, grouping by song (clip id) or artist.
    pub fn from_synth(task: Task, clips: &[&SynthClip], grouping: GroupKey) -> Result<Self> {
        let recordings = clips
            .par_iter()
            .map(|c| {
                let group = match grouping {
                    GroupKey::Song => &c.plan.id,
                    GroupKey::Artist => &c.plan.artist_id,
                };
                TaskRecording::new(task, &c.plan.id, group, &c.clip, &c.truth)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { task, recordings })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub grouping: GroupKey,
    pub seed: u64,
    pub cnn: TrainConfig,
    pub gmm_components: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 10, grouping: GroupKey::Song, seed: 0, cnn: TrainConfig::default(), gmm_components: DEFAULT_COMPONENTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_ids: Vec<String>,
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub family: Family,
    /// What counts as the positive class.
    pub positive_class: String,
    /// Counts summed over every held-out decision.
    pub pooled: Prf,
    pub folds: Vec<FoldReport>,
}

fn positive_class(task: Task) -> &'static str {
    match task {
        Task::Vocal => "singing voice",
        Task::Guitar => "picked guitar",
        Task::Palmas => "palmas",
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("task,family,fold,precision,recall,f_measure,tp,fp,fn,degenerate\n");
        let mut row = |fold: &str, p: &Prf| {
            let _ = writeln!(
                s,
                "{},{},{fold},{},{},{},{},{},{},{}",
                self.task.name(),
                self.family.name(),
                p.precision,
                p.recall,
                p.f_measure,
                p.tp,
                p.fp,
                p.fn_,
                p.degenerate
            );
        };
        for f in &self.folds {
            row(&f.fold.to_string(), &f.prf);
        }
        row("pooled", &self.pooled);
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "{} / {}: P={:.4} R={:.4} F={:.4} (positive class: {}; {} folds)",
            self.task.name(),
            self.family.name(),
            self.pooled.precision,
            self.pooled.recall,
            self.pooled.f_measure,
            self.positive_class,
            self.folds.len()
        )
    }
}

enum Features {
    Images(Vec<FeatureImage>),
    Mfcc(Vec<Vec<f64>>),
}

fn features(family: Family, task: Task, signal: &[f32]) -> Features {
    match family {
        Family::Cnn => Features::Images(build_images(&mel_energies(signal, task.log_mel())).images),
        Family::Gmm => {
            let n = image_count(signal.len() / FRAME_LEN);
            let times: Vec<f64> = (0..n).map(decision_time).collect();
            Features::Mfcc(features_at(&mfcc_features(signal), &times).into_iter().map(|f| f.to_vec()).collect())
        }
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add(1000 * fold as u64)
}

/// Train on k-1 folds, decide and smooth the held-out recordings, and count
/// over every decision instant with a defined target. Smoothing runs inside
/// the runs of such instants.
pub fn cross_validate(data: &TaskDataset, family: Family, config: &CvConfig) -> Result<EvalReport> {
    let task = data.task;
    let items: Vec<(&str, &str)> = data.recordings.iter().map(|r| (r.id.as_str(), r.group.as_str())).collect();
    let plan = make_folds(&items, config.folds, config.grouping, config.seed)?;
    let feats: Vec<Features> = data.recordings.par_iter().map(|r| features(family, task, &r.signal)).collect();
    let fold_of: Vec<usize> =
        data.recordings.iter().map(|r| plan.fold_of(&r.id).expect("every item is in a fold")).collect();

    let folds = (0..plan.k())
        .into_par_iter()
        .map(|fold| {
            let test: Vec<usize> = (0..data.recordings.len()).filter(|&i| fold_of[i] == fold).collect();
            let train_set: Vec<usize> = (0..data.recordings.len()).filter(|&i| fold_of[i] != fold).collect();
            let test_groups: BTreeSet<&str> = test.iter().map(|&i| data.recordings[i].group.as_str()).collect();
            assert!(
                train_set.iter().all(|&i| !test_groups.contains(data.recordings[i].group.as_str())),
                "a group leaked across the split of fold {fold}"
            );
            run_fold(data, &feats, &train_set, &test, family, config, fold)
                .map_err(|e| Error::Fold { fold, source: Box::new(e) })
                .map(|prf| FoldReport {
                    fold,
                    test_ids: test.iter().map(|&i| data.recordings[i].id.clone()).collect(),
                    prf,
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let (tp, fp, fn_) = folds.iter().fold((0, 0, 0), |a, f| (a.0 + f.prf.tp, a.1 + f.prf.fp, a.2 + f.prf.fn_));
    Ok(EvalReport {
        task,
        family,
        positive_class: positive_class(task).into(),
        pooled: Prf::from_counts(tp, fp, fn_),
        folds,
    })
}

/// A classifier fitted on labelled recordings.
#[derive(Debug, Clone)]
pub enum Fitted {
    Cnn(TrainOutcome),
    Gmm(GmmClassifier),
}

fn labelled(r: &TaskRecording) -> impl Iterator<Item = (usize, bool)> + '_ {
    r.labels.iter().enumerate().filter_map(|(k, l)| l.map(|l| (k, l)))
}

fn fit_on(
    data: &TaskDataset,
    feats: &[Features],
    members: &[usize],
    family: Family,
    config: &CvConfig,
    seed: u64,
) -> Result<Fitted> {
    let task = data.task;
    match family {
        Family::Cnn => {
            let mut samples = Vec::new();
            for &i in members {
                let Features::Images(images) = &feats[i] else { unreachable!() };
                for (k, l) in labelled(&data.recordings[i]) {
                    if let Some(img) = images.get(k) {
                        samples.push((img, usize::from(l)));
                    }
                }
            }
            let cfg = TrainConfig { seed, ..config.cnn.clone() };
            Ok(Fitted::Cnn(train(task, &samples, &cfg)?))
        }
        Family::Gmm => {
            let mut samples: Vec<(&[f64], usize)> = Vec::new();
            for &i in members {
                let Features::Mfcc(rows) = &feats[i] else { unreachable!() };
                for (k, l) in labelled(&data.recordings[i]) {
                    if let Some(row) = rows.get(k) {
                        samples.push((row.as_slice(), usize::from(l)));
                    }
                }
            }
            Ok(Fitted::Gmm(GmmClassifier::train(task, &samples, config.gmm_components, seed)?))
        }
    }
}

/// Fit one classifier on every recording of `data`, seeded with `config.seed`.
pub fn fit(data: &TaskDataset, family: Family, config: &CvConfig) -> Result<Fitted> {
    let feats: Vec<Features> = data.recordings.par_iter().map(|r| features(family, data.task, &r.signal)).collect();
    let all: Vec<usize> = (0..data.recordings.len()).collect();
    fit_on(data, &feats, &all, family, config, config.seed)
}

fn run_fold(
    data: &TaskDataset,
    feats: &[Features],
    train_set: &[usize],
    test: &[usize],
    family: Family,
    config: &CvConfig,
    fold: usize,
) -> Result<Prf> {
    let task = data.task;
    let seed = fold_seed(config.seed, fold);
    let model = fit_on(data, feats, train_set, family, config, seed)?;
    let decide = |i: usize| -> Result<Vec<bool>> {
        match (&model, &feats[i]) {
            (Fitted::Cnn(m), Features::Images(images)) => {
                Ok(predict_sequence(&m.model, images)?.into_iter().map(|d| d.positive).collect())
            }
            (Fitted::Gmm(m), Features::Mfcc(rows)) => m.classify(rows),
            _ => unreachable!("features match the model family"),
        }
    };
    let (mut predicted, mut truth) = (Vec::new(), Vec::new());
    for &i in test {
        let labels = &data.recordings[i].labels;
        let mut raw = decide(i)?;
        raw.resize(labels.len(), false);
        let eligible: Vec<bool> = labels.iter().map(Option::is_some).collect();
        let smoothed = smooth_runs(&raw, &eligible, task.smoothing_window())?;
        for (k, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                predicted.push(smoothed[k]);
                truth.push(*l);
            }
        }
    }
    prf(&predicted, &truth)
}
