//! Instrumentation-based segmentation of a recording.
//!
//! Silence is detected on the mono mix, singing voice on the vocal channel,
//! guitar technique on the guitar channel (only where nobody sings) and
//! palmas on the mono mix. Each decision track is median-smoothed before
//! segments are assembled.

mod export;

pub use export::{render_svg, AnnotationFile, ANNOTATION_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::audio::{prepare, AudioClip, TARGET_RATE};
use crate::dsp::{frame_energies, mel_energies, mfcc_features, silence_mask, FRAME_LEN};
use crate::error::{Error, Result};
use crate::gmm::{features_at, GmmClassifier};
use crate::images::{build_images, decision_time, image_count, CENTER_OFFSET, IMAGE_HOP};
use crate::micronet::{predict_sequence, CnnModel};
use crate::task::Task;

/// Anything that turns a 44.1 kHz signal into one raw binary decision per
/// decision instant (`image_count` of its frames).
pub trait DecisionModel: Sync {
    fn task(&self) -> Task;
    fn decide(&self, signal: &[f32]) -> Result<Vec<bool>>;
}

impl DecisionModel for CnnModel {
    fn task(&self) -> Task {
        CnnModel::task(self)
    }

    fn decide(&self, signal: &[f32]) -> Result<Vec<bool>> {
        let images = build_images(&mel_energies(signal, self.task().log_mel()));
        Ok(predict_sequence(self, &images.images)?.into_iter().map(|d| d.positive).collect())
    }
}

impl DecisionModel for GmmClassifier {
    fn task(&self) -> Task {
        self.task
    }

    fn decide(&self, signal: &[f32]) -> Result<Vec<bool>> {
        let n = image_count(signal.len() / FRAME_LEN);
        let times: Vec<f64> = (0..n).map(decision_time).collect();
        let feats = features_at(&mfcc_features(signal), &times);
        if feats.len() != n {
            return Ok(vec![false; n]);
        }
        self.classify(&feats)
    }
}

/// The three classifiers used by [`annotate`].
pub struct ModelSet<'a> {
    pub vocal: &'a dyn DecisionModel,
    pub guitar: &'a dyn DecisionModel,
    pub palmas: &'a dyn DecisionModel,
}

impl ModelSet<'_> {
    fn check(&self) -> Result<()> {
        for (want, m) in [(Task::Vocal, self.vocal), (Task::Guitar, self.guitar), (Task::Palmas, self.palmas)] {
            if m.task() != want {
                return Err(Error::MissingModel(format!("{want} (slot holds a {} model)", m.task())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuitarLabel {
    Picked,
    Strummed,
    /// Silent or vocal instant; the guitar classifier did not run.
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentLabel {
    Vocal,
    GuitarPicked,
    GuitarStrummed,
    Silence,
}

impl SegmentLabel {
    pub fn name(self) -> &'static str {
        match self {
            SegmentLabel::Vocal => "vocal",
            SegmentLabel::GuitarPicked => "guitar-picked",
            SegmentLabel::GuitarStrummed => "guitar-strummed",
            SegmentLabel::Silence => "silence",
        }
    }
}

/// Smoothed per-instant labels on the shared decision time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrack {
    pub duration: f64,
    pub times: Vec<f64>,
    pub silent: Vec<bool>,
    pub vocal: Vec<bool>,
    pub guitar: Vec<GuitarLabel>,
    pub palmas: Vec<bool>,
}

impl DecisionTrack {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn label_at(&self, k: usize) -> SegmentLabel {
        if self.silent[k] {
            SegmentLabel::Silence
        } else if self.vocal[k] {
            SegmentLabel::Vocal
        } else if self.guitar[k] == GuitarLabel::Picked {
            SegmentLabel::GuitarPicked
        } else {
            SegmentLabel::GuitarStrummed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: SegmentLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

/// Segments partition `[0, duration)`; palmas intervals overlay them freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralAnnotation {
    pub duration: f64,
    pub segments: Vec<Segment>,
    pub palmas: Vec<Interval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InstrumentationProfile {
    pub pct_vocal: f64,
    pub pct_picked: f64,
    pub pct_strummed: f64,
    pub pct_palmas: f64,
}

impl InstrumentationProfile {
    pub fn as_array(&self) -> [f64; 4] {
        [self.pct_vocal, self.pct_picked, self.pct_strummed, self.pct_palmas]
    }
}

/// Fractions over non-silent decisions, plus the same counts over all decisions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileReport {
    pub non_silent: InstrumentationProfile,
    pub all_decisions: InstrumentationProfile,
    pub n_decisions: usize,
    pub n_non_silent: usize,
    /// No non-silent decision; both profiles are zero.
    pub all_silent: bool,
}

/// Tuning knobs of [`annotate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateConfig {
    /// Silent runs shorter than this (seconds) take their neighbours' label
    /// in the displayed segments. Statistics always see the raw silence.
    pub min_silence_segment: f64,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self { min_silence_segment: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotated {
    pub annotation: StructuralAnnotation,
    pub track: DecisionTrack,
    /// The clip was shorter than one image span; everything is silence.
    pub short_input: bool,
    pub vocal_channel: Option<usize>,
}

/// Centred running median of a binary sequence; windows shrink at the edges.
///
/// With shrunken windows of even length, ties resolve to 0.
pub fn median_smooth(decisions: &[bool], window: usize) -> Result<Vec<bool>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("median window must be odd, got {window}")));
    }
    let half = window / 2;
    let n = decisions.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &d) in decisions.iter().enumerate() {
        prefix[i + 1] = prefix[i] + d as usize;
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            2 * (prefix[hi] - prefix[lo]) > hi - lo
        })
        .collect())
}

/// Median-smooth `raw` separately inside each maximal run of eligible
/// instants; ineligible instants come out `false`.
pub fn smooth_runs(raw: &[bool], eligible: &[bool], window: usize) -> Result<Vec<bool>> {
    let mut out = vec![false; raw.len()];
    let mut k = 0;
    while k < raw.len() {
        if !eligible[k] {
            k += 1;
            continue;
        }
        let end = (k..raw.len()).find(|&j| !eligible[j]).unwrap_or(raw.len());
        out[k..end].copy_from_slice(&median_smooth(&raw[k..end], window)?);
        k = end;
    }
    Ok(out)
}

/// Silence flag per decision instant, judged on the frame at the image centre.
pub fn decision_silence(mono: &[f32]) -> Vec<bool> {
    let mask = silence_mask(&frame_energies(mono));
    (0..image_count(mask.len())).map(|k| mask[k * IMAGE_HOP + CENTER_OFFSET]).collect()
}

fn expect_len(task: Task, got: Vec<bool>, n: usize) -> Result<Vec<bool>> {
    if got.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} {task} decisions"),
            actual: format!("{}", got.len()),
        });
    }
    Ok(got)
}

/// Run the full pipeline on one clip.
pub fn annotate(clip: &AudioClip, models: &ModelSet<'_>, config: &AnnotateConfig) -> Result<Annotated> {
    models.check()?;
    let views = prepare(clip)?;
    let duration = views.mono.len() as f64 / TARGET_RATE as f64;
    let silent = decision_silence(&views.mono);
    let n = silent.len();
    if n == 0 {
        let track = DecisionTrack {
            duration,
            times: vec![],
            silent: vec![],
            vocal: vec![],
            guitar: vec![],
            palmas: vec![],
        };
        let annotation = StructuralAnnotation {
            duration,
            segments: vec![Segment { start: 0.0, end: duration, label: SegmentLabel::Silence }],
            palmas: vec![],
        };
        return Ok(Annotated { annotation, track, short_input: true, vocal_channel: views.vocal_channel });
    }

    let audible: Vec<bool> = silent.iter().map(|s| !s).collect();
    let vocal_raw = expect_len(Task::Vocal, models.vocal.decide(&views.vocal)?, n)?;
    let vocal = smooth_runs(&vocal_raw, &audible, Task::Vocal.smoothing_window())?;

    let guitar_eligible: Vec<bool> = (0..n).map(|k| audible[k] && !vocal[k]).collect();
    let guitar_raw = expect_len(Task::Guitar, models.guitar.decide(&views.guitar)?, n)?;
    let picked = smooth_runs(&guitar_raw, &guitar_eligible, Task::Guitar.smoothing_window())?;
    let guitar = (0..n)
        .map(|k| match (guitar_eligible[k], picked[k]) {
            (false, _) => GuitarLabel::NotApplicable,
            (true, true) => GuitarLabel::Picked,
            (true, false) => GuitarLabel::Strummed,
        })
        .collect();

    let palmas_raw = expect_len(Task::Palmas, models.palmas.decide(&views.mono)?, n)?;
    let palmas = smooth_runs(&palmas_raw, &audible, Task::Palmas.smoothing_window())?;

    let track = DecisionTrack { duration, times: (0..n).map(decision_time).collect(), silent, vocal, guitar, palmas };
    let annotation = assemble(&track, config);
    Ok(Annotated { annotation, track, short_input: false, vocal_channel: views.vocal_channel })
}

/// Boundary between decision `k - 1` and `k`: the midpoint of their instants.
fn boundary(track: &DecisionTrack, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else if k >= track.len() {
        track.duration
    } else {
        0.5 * (track.times[k - 1] + track.times[k])
    }
}

/// Maximal runs `(start, end)` of equal values.
fn runs<T: PartialEq + Copy>(v: &[T]) -> Vec<(usize, usize, T)> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=v.len() {
        if k == v.len() || v[k] != v[start] {
            out.push((start, k, v[start]));
            start = k;
        }
    }
    out
}

/// Build display segments and the palmas overlay from a decision track.
pub fn assemble(track: &DecisionTrack, config: &AnnotateConfig) -> StructuralAnnotation {
    if track.is_empty() {
        return StructuralAnnotation {
            duration: track.duration,
            segments: vec![Segment { start: 0.0, end: track.duration, label: SegmentLabel::Silence }],
            palmas: vec![],
        };
    }
    let mut labels: Vec<SegmentLabel> = (0..track.len()).map(|k| track.label_at(k)).collect();
    fill_short_silences(&mut labels, track, config.min_silence_segment);
    let segments = runs(&labels)
        .into_iter()
        .map(|(a, b, label)| Segment { start: boundary(track, a), end: boundary(track, b), label })
        .collect();
    let palmas = runs(&track.palmas)
        .into_iter()
        .filter(|r| r.2)
        .map(|(a, b, _)| Interval { start: boundary(track, a), end: boundary(track, b) })
        .collect();
    StructuralAnnotation { duration: track.duration, segments, palmas }
}

/// Relabel short silent runs with the label of the nearest non-silent instant.
fn fill_short_silences(labels: &mut [SegmentLabel], track: &DecisionTrack, min_len: f64) {
    let original = labels.to_vec();
    for (a, b, label) in runs(&original) {
        if label != SegmentLabel::Silence || boundary(track, b) - boundary(track, a) >= min_len {
            continue;
        }
        let left = a.checked_sub(1).map(|k| original[k]);
        let right = original.get(b).copied();
        for k in a..b {
            let fill = match (left, right) {
                (Some(l), Some(r)) => {
                    if k - a < b - k {
                        l
                    } else {
                        r
                    }
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => continue,
            };
            labels[k] = fill;
        }
    }
}

/// Instrumentation fractions of a decision track.
pub fn profile(track: &DecisionTrack) -> ProfileReport {
    let n = track.len();
    let mut counts = [0usize; 4];
    let mut audible = 0;
    for k in 0..n {
        if track.silent[k] {
            continue;
        }
        audible += 1;
        if track.vocal[k] {
            counts[0] += 1;
        }
        match track.guitar[k] {
            GuitarLabel::Picked => counts[1] += 1,
            GuitarLabel::Strummed => counts[2] += 1,
            GuitarLabel::NotApplicable => {}
        }
        if track.palmas[k] {
            counts[3] += 1;
        }
    }
    let frac = |d: usize| -> InstrumentationProfile {
        if d == 0 {
            return InstrumentationProfile::default();
        }
        let f = |c: usize| c as f64 / d as f64;
        InstrumentationProfile {
            pct_vocal: f(counts[0]),
            pct_picked: f(counts[1]),
            pct_strummed: f(counts[2]),
            pct_palmas: f(counts[3]),
        }
    };
    ProfileReport {
        non_silent: frac(audible),
        all_decisions: frac(n),
        n_decisions: n,
        n_non_silent: audible,
        all_silent: audible == 0,
    }
}

/// One (vocal, palmas, picked) vector per whole second.
pub fn sequence_1hz(track: &DecisionTrack) -> Vec<[u8; 3]> {
    let seconds = track.duration.floor().max(0.0) as usize;
    if track.is_empty() {
        return vec![[0, 0, 0]; seconds];
    }
    (0..seconds)
        .map(|t| {
            let target = t as f64 + 0.5;
            let k = nearest_instant(&track.times, target);
            [
                track.vocal[k] as u8,
                track.palmas[k] as u8,
                (track.guitar[k] == GuitarLabel::Picked) as u8,
            ]
        })
        .collect()
}

/// Index of the instant closest to `t`; ties go to the earlier one.
fn nearest_instant(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        0
    } else if i == times.len() || t - times[i - 1] <= times[i] - t {
        i - 1
    } else {
        i
    }
}

#[cfg(test)]
mod tests;
