//! Deterministic synthetic recordings with exact ground truth.
//!
//! Voice is a harmonic tone with vibrato and slow pitch drift, picked guitar
//! is a stream of exponentially decaying plucks, strummed guitar is a series
//! of staggered multi-note chords, and palmas are band-passed noise clicks.
//! Voice and guitar sit on opposite channels with some bleed; palmas are
//! centred. Silence gaps hold only a -60 dB noise floor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, TARGET_RATE};
use crate::error::{Error, Result};
use crate::images::decision_time;
use crate::segmenter::{
    assemble, AnnotateConfig, Annotated, AnnotationFile, DecisionTrack, GuitarLabel, Interval,
};
use crate::task::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionClass {
    /// Singing over soft strummed accompaniment.
    Voice,
    Picked,
    Strummed,
    Silence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPlan {
    pub class: SectionClass,
    pub duration: f64,
    #[serde(default)]
    pub palmas: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPlan {
    pub id: String,
    pub artist_id: String,
    /// Task whose contrast this clip was planned around.
    pub emphasis: Option<Task>,
    /// 0 = left, 1 = right.
    pub vocal_channel: usize,
    pub sections: Vec<SectionPlan>,
}

impl ClipPlan {
    pub fn duration(&self) -> f64 {
        self.sections.iter().map(|s| s.duration).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.sections.is_empty() {
            return Err(Error::InvalidArgument(format!("clip {} has no sections", self.id)));
        }
        if self.vocal_channel > 1 {
            return Err(Error::InvalidArgument(format!("clip {}: vocal channel must be 0 or 1", self.id)));
        }
        for s in &self.sections {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::InvalidArgument(format!("clip {}: section duration {}", self.id, s.duration)));
            }
            if s.palmas && s.class == SectionClass::Silence {
                return Err(Error::InvalidArgument(format!("clip {}: palmas over silence", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSection {
    pub start: f64,
    pub end: f64,
    pub class: SectionClass,
}

/// Exact section layout of a synthetic clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub duration: f64,
    pub sections: Vec<TruthSection>,
    pub palmas: Vec<Interval>,
}

impl GroundTruth {
    pub fn from_plan(plan: &ClipPlan) -> Self {
        let mut t = 0.0;
        let mut sections = Vec::new();
        let mut palmas: Vec<Interval> = Vec::new();
        for s in &plan.sections {
            let (start, end) = (t, t + s.duration);
            sections.push(TruthSection { start, end, class: s.class });
            if s.palmas {
                match palmas.last_mut() {
                    Some(last) if last.end == start => last.end = end,
                    _ => palmas.push(Interval { start, end }),
                }
            }
            t = end;
        }
        Self { duration: t, sections, palmas }
    }

    pub fn class_at(&self, t: f64) -> SectionClass {
        self.sections
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .or(self.sections.last().filter(|s| t >= s.end))
            .map_or(SectionClass::Silence, |s| s.class)
    }

    pub fn palmas_at(&self, t: f64) -> bool {
        self.palmas.iter().any(|p| p.start <= t && t < p.end)
    }

    /// Binary target of `task` at time `t`; `None` where the task does not apply.
    pub fn label(&self, task: Task, t: f64) -> Option<bool> {
        let class = self.class_at(t);
        match (task, class) {
            (_, SectionClass::Silence) => None,
            (Task::Vocal, c) => Some(c == SectionClass::Voice),
            (Task::Guitar, SectionClass::Picked) => Some(true),
            (Task::Guitar, SectionClass::Strummed) => Some(false),
            (Task::Guitar, SectionClass::Voice) => None,
            (Task::Palmas, _) => Some(self.palmas_at(t)),
        }
    }

    /// Per-decision targets for a signal of `n` decision instants.
    pub fn labels(&self, task: Task, n: usize) -> Vec<Option<bool>> {
        (0..n).map(|k| self.label(task, decision_time(k))).collect()
    }

    /// Reference annotation in the segmenter's output schema.
    pub fn to_annotation(&self, id: &str, n_decisions: usize, vocal_channel: Option<usize>) -> AnnotationFile {
        let times: Vec<f64> = (0..n_decisions).map(decision_time).collect();
        let classes: Vec<SectionClass> = times.iter().map(|&t| self.class_at(t)).collect();
        let track = DecisionTrack {
            duration: self.duration,
            silent: classes.iter().map(|&c| c == SectionClass::Silence).collect(),
            vocal: classes.iter().map(|&c| c == SectionClass::Voice).collect(),
            guitar: classes
                .iter()
                .map(|c| match c {
                    SectionClass::Picked => GuitarLabel::Picked,
                    SectionClass::Strummed => GuitarLabel::Strummed,
                    _ => GuitarLabel::NotApplicable,
                })
                .collect(),
            palmas: times.iter().map(|&t| self.palmas_at(t)).collect(),
            times,
        };
        let annotation = assemble(&track, &AnnotateConfig::default());
        let annotated = Annotated { annotation, track, short_input: n_decisions == 0, vocal_channel };
        AnnotationFile::new(id, &annotated)
    }
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub plan: ClipPlan,
    pub clip: AudioClip,
    pub truth: GroundTruth,
}

/// Corpus shape for [`plan_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub clips_per_task: usize,
    pub min_secs: f64,
    pub max_secs: f64,
    pub artists: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { clips_per_task: 20, min_secs: 30.0, max_secs: 40.0, artists: 10 }
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, options: &[T]) -> T {
    options[rng.gen_range(0..options.len())]
}

fn plan_one(id: String, artist_id: String, emphasis: Task, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> ClipPlan {
    use SectionClass::*;
    let target = rng.gen_range(spec.min_secs..=spec.max_secs);
    let mut sections = Vec::new();
    let mut total = 0.0;
    let mut flip = rng.gen_bool(0.5);
    // At most one gap, somewhere in the middle third.
    let gap_at = if rng.gen_bool(0.5) { Some(rng.gen_range(target / 3.0..2.0 * target / 3.0)) } else { None };
    let mut gap_done = false;
    while total < target {
        let remaining = target - total;
        if let Some(g) = gap_at {
            if !gap_done && total >= g {
                let d = rng.gen_range(0.6..1.5f64).min(remaining);
                sections.push(SectionPlan { class: Silence, duration: d, palmas: false });
                total += d;
                gap_done = true;
                continue;
            }
        }
        let mut d = rng.gen_range(3.0..7.0f64);
        if remaining - d < 3.0 {
            d = remaining;
        }
        let guitar = pick(rng, &[Picked, Strummed]);
        let (class, palmas) = match emphasis {
            Task::Vocal => (if flip { Voice } else { guitar }, false),
            Task::Guitar => (if flip { Picked } else { Strummed }, false),
            Task::Palmas => (pick(rng, &[Voice, Picked, Strummed]), flip),
        };
        sections.push(SectionPlan { class, duration: d, palmas });
        total += d;
        flip = !flip;
    }
    ClipPlan { id, artist_id, emphasis: Some(emphasis), vocal_channel: rng.gen_range(0..2), sections }
}

/// `clips_per_task` plans per task, ids `<task>_<nn>`, artists assigned round-robin.
pub fn plan_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<ClipPlan>> {
    if spec.clips_per_task == 0 || spec.artists == 0 || !(spec.min_secs > 0.0 && spec.min_secs <= spec.max_secs) {
        return Err(Error::InvalidArgument(format!("invalid corpus spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans = Vec::new();
    for task in Task::ALL {
        for i in 0..spec.clips_per_task {
            let id = format!("{}_{i:02}", task.name());
            let artist = format!("artist_{:02}", i % spec.artists);
            plans.push(plan_one(id, artist, task, spec, &mut rng));
        }
    }
    Ok(plans)
}

/// Render every plan; clip `i` uses the seed stream `i`.
pub fn synth_corpus(plans: &[ClipPlan], seed: u64) -> Result<Vec<SynthClip>> {
    use rayon::prelude::*;
    plans.par_iter().enumerate().map(|(i, p)| synth_clip(p, seed, i as u64)).collect()
}

fn midi_hz(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

/// Raised-cosine fade over the first and last 5 ms of `buf`.
fn fade_edges(buf: &mut [f64]) {
    let n = (0.005 * TARGET_RATE as f64) as usize;
    let n = n.min(buf.len() / 2);
    let len = buf.len();
    for i in 0..n {
        let g = 0.5 - 0.5 * (PI * i as f64 / n as f64).cos();
        buf[i] *= g;
        buf[len - 1 - i] *= g;
    }
}

fn voice(buf: &mut [f64], root: f64, rng: &mut ChaCha8Rng) {
    let rate = TARGET_RATE as f64;
    let vib_rate = rng.gen_range(5.0..7.0);
    let vib_depth = rng.gen_range(0.25..0.45); // semitones
    let drift_rate = rng.gen_range(0.1..0.3);
    let drift_phase = rng.gen_range(0.0..2.0 * PI);
    let steps = [0.0, 1.0, 4.0, 5.0, 7.0, 8.0, 10.0, 12.0];
    let mut phase = 0.0;
    let mut note = root + pick(rng, &steps);
    let mut next_change = 0;
    let mut glide_from = note;
    let mut glide_start = 0usize;
    let mut weights = [0.0; 10];
    for (i, out) in buf.iter_mut().enumerate() {
        if i >= next_change {
            glide_from = note;
            glide_start = i;
            note = root + pick(rng, &steps);
            next_change = i + (rng.gen_range(0.35..1.1) * rate) as usize;
        }
        let t = i as f64 / rate;
        let glide = ((i - glide_start) as f64 / (0.06 * rate)).min(1.0);
        let pitch = glide_from + (note - glide_from) * glide
            + vib_depth * (2.0 * PI * vib_rate * t).sin()
            + 0.2 * (2.0 * PI * drift_rate * t + drift_phase).sin();
        let hz = midi_hz(pitch);
        phase += 2.0 * PI * hz / rate;
        // Pitch moves slowly enough that the formant weights can lag by 32 samples.
        if i % 32 == 0 {
            for (h, w) in weights.iter_mut().enumerate() {
                let f = hz * (h + 1) as f64;
                // A broad formant bump around 600 Hz and a smaller one near 2.5 kHz.
                let formant = (-((f - 600.0) / 500.0).powi(2)).exp() + 0.4 * (-((f - 2500.0) / 700.0).powi(2)).exp();
                *w = (0.15 + formant) / (h + 1) as f64;
            }
        }
        // sin(h x) by the Chebyshev recurrence.
        let (s1, c1) = phase.sin_cos();
        let (mut prev, mut cur) = (0.0, s1);
        let mut s = 0.0;
        for w in weights {
            s += w * cur;
            (prev, cur) = (cur, 2.0 * c1 * cur - prev);
        }
        let swell = 0.8 + 0.2 * (2.0 * PI * 0.5 * t).sin();
        *out += 0.3 * swell * s;
    }
}

/// Add one decaying harmonic note starting at sample `at`. Higher partials
/// die faster.
fn pluck(buf: &mut [f64], at: usize, midi: f64, amp: f64, tau: f64) {
    const PARTIALS: usize = 6;
    let rate = TARGET_RATE as f64;
    let f0 = midi_hz(midi);
    let len = ((5.0 * tau) * rate) as usize;
    let start = at.min(buf.len());
    // Each partial is a decaying phasor advanced by one complex multiply per sample;
    // its imaginary part is amplitude * envelope * sin.
    let mut re = [0.0; PARTIALS];
    let mut im = [0.0; PARTIALS];
    let mut rot = [(0.0, 0.0); PARTIALS];
    for h in 0..PARTIALS {
        let n = (h + 1) as f64;
        let decay = (-(1.0 / tau + 2.0 * h as f64) / rate).exp();
        let w = 2.0 * PI * f0 * n / rate;
        rot[h] = (decay * w.cos(), decay * w.sin());
        re[h] = amp / n;
    }
    let attack_len = 0.002 * rate;
    for (j, out) in buf[start..].iter_mut().take(len).enumerate() {
        let mut s = 0.0;
        for h in 0..PARTIALS {
            s += im[h];
            let (c, d) = rot[h];
            (re[h], im[h]) = (re[h] * c - im[h] * d, re[h] * d + im[h] * c);
        }
        *out += (j as f64 / attack_len).min(1.0) * s;
    }
}

fn picked(buf: &mut [f64], root: f64, rng: &mut ChaCha8Rng) {
    let rate = TARGET_RATE as f64;
    let notes_per_sec = rng.gen_range(3.0..7.0);
    let scale = [0.0, 1.0, 3.0, 5.0, 7.0, 8.0, 10.0, 12.0, 13.0, 15.0];
    let mut t = 0.0;
    while t < buf.len() as f64 / rate {
        let m = root - 12.0 + pick(rng, &scale) + 12.0 * rng.gen_range(0..2) as f64;
        pluck(buf, (t * rate) as usize, m, rng.gen_range(0.35..0.6), rng.gen_range(0.15..0.4));
        t += rng.gen_range(0.7..1.3) / notes_per_sec;
    }
}

fn strummed(buf: &mut [f64], root: f64, level: f64, rng: &mut ChaCha8Rng) {
    let rate = TARGET_RATE as f64;
    let chords: [[f64; 5]; 3] = [[0.0, 7.0, 12.0, 16.0, 19.0], [1.0, 5.0, 8.0, 13.0, 17.0], [-2.0, 5.0, 10.0, 14.0, 17.0]];
    let mut t = 0.0;
    while t < buf.len() as f64 / rate {
        let chord = chords[rng.gen_range(0..chords.len())];
        let down = rng.gen_bool(0.6);
        let tau = rng.gen_range(0.6..1.0);
        for (j, &iv) in chord.iter().enumerate() {
            let order = if down { j } else { chord.len() - 1 - j };
            let at = ((t + order as f64 * rng.gen_range(0.01..0.025)) * rate) as usize;
            pluck(buf, at, root - 12.0 + iv, level * rng.gen_range(0.25..0.35), tau);
        }
        t += rng.gen_range(0.4..0.8);
    }
}

fn palmas(buf: &mut [f64], rng: &mut ChaCha8Rng) {
    let rate = TARGET_RATE as f64;
    let per_sec = rng.gen_range(2.0..4.0);
    let level = rng.gen_range(0.35..0.7);
    // Band-pass biquad around 2 kHz, Q = 1.
    let w0 = 2.0 * PI * 2000.0 / rate;
    let alpha = w0.sin() / 2.0;
    let a0 = 1.0 + alpha;
    let (b0, b2, a1, a2) = (alpha / a0, -alpha / a0, -2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let mut t = rng.gen_range(0.0..0.2);
    while t < buf.len() as f64 / rate {
        let at = ((t + rng.gen_range(-0.02..0.02f64)).max(0.0) * rate) as usize;
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        let amp = level * rng.gen_range(0.8..1.2);
        let start = at.min(buf.len());
        for (j, out) in buf[start..].iter_mut().take((0.04 * rate) as usize).enumerate() {
            let x = rng.gen_range(-1.0..1.0) * (-(j as f64) / (0.008 * rate)).exp();
            let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, x, y1, y);
            *out += 3.0 * amp * y;
        }
        t += 1.0 / per_sec;
    }
}

/// Render one plan. `stream` selects an independent random stream, so a
/// clip renders the same whether alone or inside a corpus.
pub fn synth_clip(plan: &ClipPlan, seed: u64, stream: u64) -> Result<SynthClip> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let rate = TARGET_RATE as f64;
    let root = rng.gen_range(52..60) as f64;
    let truth = GroundTruth::from_plan(plan);
    let total = (truth.duration * rate).round() as usize;
    let mut vocal_ch = vec![0.0f64; total];
    let mut guitar_ch = vec![0.0f64; total];
    let mut clap = vec![0.0f64; total];
    for (s, sec) in plan.sections.iter().zip(&truth.sections) {
        let a = ((sec.start * rate).round() as usize).min(total);
        let b = ((sec.end * rate).round() as usize).min(total);
        let mut v = vec![0.0; b - a];
        let mut g = vec![0.0; b - a];
        match s.class {
            SectionClass::Voice => {
                voice(&mut v, root + 12.0, &mut rng);
                strummed(&mut g, root, 0.35, &mut rng);
            }
            SectionClass::Picked => picked(&mut g, root, &mut rng),
            SectionClass::Strummed => strummed(&mut g, root, 1.0, &mut rng),
            SectionClass::Silence => {}
        }
        fade_edges(&mut v);
        fade_edges(&mut g);
        vocal_ch[a..b].copy_from_slice(&v);
        guitar_ch[a..b].copy_from_slice(&g);
        if s.palmas {
            let mut c = vec![0.0; b - a];
            palmas(&mut c, &mut rng);
            fade_edges(&mut c);
            clap[a..b].copy_from_slice(&c);
        }
    }
    let bleed = 0.25;
    let mut channels = [vec![0.0f64; total], vec![0.0f64; total]];
    let (vc, gc) = (plan.vocal_channel, 1 - plan.vocal_channel);
    for i in 0..total {
        channels[vc][i] = vocal_ch[i] + bleed * guitar_ch[i] + clap[i];
        channels[gc][i] = guitar_ch[i] + bleed * vocal_ch[i] + clap[i];
    }
    let peak = channels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 0.9 / peak } else { 1.0 };
    let [left, right] = channels.map(|ch| {
        ch.iter().map(|v| (v * gain + 1e-3 * rng.gen_range(-1.0..1.0)) as f32).collect::<Vec<f32>>()
    });
    let clip = AudioClip::stereo(left, right, TARGET_RATE)?;
    Ok(SynthClip { plan: plan.clone(), clip, truth })
}
