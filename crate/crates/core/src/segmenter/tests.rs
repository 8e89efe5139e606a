use proptest::prelude::*;

use super::*;
use crate::images::DECISION_HOP;

/// Replays a fixed label function of the decision time.
struct Scripted {
    task: Task,
    label: fn(f64) -> bool,
}

impl DecisionModel for Scripted {
    fn task(&self) -> Task {
        self.task
    }

    fn decide(&self, signal: &[f32]) -> Result<Vec<bool>> {
        let n = image_count(signal.len() / FRAME_LEN);
        Ok((0..n).map(|k| (self.label)(decision_time(k))).collect())
    }
}

fn tone_clip(secs: f64) -> AudioClip {
    let n = (secs * TARGET_RATE as f64) as usize;
    let s = (0..n).map(|i| (0.3 * (i as f64 * 0.05).sin()) as f32).collect();
    AudioClip::mono(s, TARGET_RATE).unwrap()
}

fn three_part() -> [Scripted; 3] {
    [
        Scripted { task: Task::Vocal, label: |t| (10.0..20.0).contains(&t) },
        // Picked for the first third, strummed afterwards.
        Scripted { task: Task::Guitar, label: |t| t < 10.0 },
        Scripted { task: Task::Palmas, label: |t| t >= 20.0 },
    ]
}

fn annotate_with(clip: &AudioClip, m: &[Scripted; 3]) -> Annotated {
    let set = ModelSet { vocal: &m[0], guitar: &m[1], palmas: &m[2] };
    annotate(clip, &set, &AnnotateConfig::default()).unwrap()
}

#[test]
fn median_examples() {
    let b = |v: &[u8]| v.iter().map(|&x| x == 1).collect::<Vec<_>>();
    assert_eq!(median_smooth(&b(&[1, 1, 0, 1, 1]), 5).unwrap(), b(&[1, 1, 1, 1, 1]));
    assert_eq!(median_smooth(&b(&[0, 0, 0, 0]), 5).unwrap(), b(&[0, 0, 0, 0]));
    assert_eq!(median_smooth(&b(&[1, 0, 0, 0, 1]), 5).unwrap(), b(&[0, 0, 0, 0, 0]));
    assert!(median_smooth(&b(&[1, 0]), 4).is_err());
    assert!(median_smooth(&[], 5).unwrap().is_empty());
}

#[test]
fn median_smoothing_can_need_more_than_one_pass() {
    // Shrunken edge windows can break an alternating pattern in stages.
    let alt: Vec<bool> = (0..6).map(|i| i % 2 == 0).collect();
    let once = median_smooth(&alt, 3).unwrap();
    let twice = median_smooth(&once, 3).unwrap();
    assert_ne!(once, twice);
}

#[test]
fn three_sections_in_order() {
    let out = annotate_with(&tone_clip(30.0), &three_part());
    let segs = &out.annotation.segments;
    let labels: Vec<SegmentLabel> = segs.iter().map(|s| s.label).collect();
    assert_eq!(labels, [SegmentLabel::GuitarPicked, SegmentLabel::Vocal, SegmentLabel::GuitarStrummed]);
    assert!((segs[0].end - 10.0).abs() <= 1.0 && (segs[1].end - 20.0).abs() <= 1.0);
    assert_eq!(segs[0].start, 0.0);
    assert_eq!(segs[2].end, out.annotation.duration);
    assert_eq!(out.annotation.palmas.len(), 1);
    assert!((out.annotation.palmas[0].start - 20.0).abs() <= 1.0);
    for k in 0..out.track.len() {
        if out.track.vocal[k] {
            assert_eq!(out.track.guitar[k], GuitarLabel::NotApplicable);
        }
    }
}

#[test]
fn isolated_flips_are_smoothed_away() {
    let models = [
        Scripted { task: Task::Vocal, label: |t| ((t / DECISION_HOP).round() as i64) % 17 == 3 },
        Scripted { task: Task::Guitar, label: |_| true },
        Scripted { task: Task::Palmas, label: |t| ((t / DECISION_HOP).round() as i64) % 9 == 0 },
    ];
    let out = annotate_with(&tone_clip(12.0), &models);
    assert_eq!(out.annotation.segments.len(), 1);
    assert_eq!(out.annotation.segments[0].label, SegmentLabel::GuitarPicked);
    assert!(out.annotation.palmas.is_empty());
}

#[test]
fn digital_silence() {
    let clip = AudioClip::mono(vec![0.0; 44_100 * 5], TARGET_RATE).unwrap();
    let out = annotate_with(&clip, &three_part());
    assert_eq!(out.annotation.segments.len(), 1);
    assert_eq!(out.annotation.segments[0].label, SegmentLabel::Silence);
    assert!(out.annotation.palmas.is_empty());
    let p = profile(&out.track);
    assert!(p.all_silent);
    assert_eq!(p.non_silent, InstrumentationProfile::default());
}

#[test]
fn short_clip_is_flagged() {
    let out = annotate_with(&tone_clip(0.5), &three_part());
    assert!(out.short_input);
    assert_eq!(out.annotation.segments, vec![Segment { start: 0.0, end: 0.5, label: SegmentLabel::Silence }]);
}

#[test]
fn wrong_model_slot_is_rejected() {
    let m = three_part();
    let set = ModelSet { vocal: &m[1], guitar: &m[1], palmas: &m[2] };
    assert!(matches!(
        annotate(&tone_clip(2.0), &set, &AnnotateConfig::default()),
        Err(Error::MissingModel(_))
    ));
}

#[test]
fn gain_does_not_change_the_annotation() {
    let clip = tone_clip(8.0);
    let quiet = AudioClip::mono(clip.channel(0).iter().map(|s| s * 0.01).collect(), TARGET_RATE).unwrap();
    assert_eq!(annotate_with(&clip, &three_part()).annotation, annotate_with(&quiet, &three_part()).annotation);
}

fn track_from(vocal: &[bool], picked: &[bool], palmas: &[bool], silent: &[bool]) -> DecisionTrack {
    let n = vocal.len();
    DecisionTrack {
        duration: decision_time(n),
        times: (0..n).map(decision_time).collect(),
        silent: silent.to_vec(),
        vocal: (0..n).map(|k| vocal[k] && !silent[k]).collect(),
        guitar: (0..n)
            .map(|k| match (silent[k] || vocal[k], picked[k]) {
                (true, _) => GuitarLabel::NotApplicable,
                (false, true) => GuitarLabel::Picked,
                (false, false) => GuitarLabel::Strummed,
            })
            .collect(),
        palmas: (0..n).map(|k| palmas[k] && !silent[k]).collect(),
    }
}

#[test]
fn profile_counts() {
    let n = 110;
    let vocal: Vec<bool> = (0..n).map(|k| k < 40).collect();
    let picked: Vec<bool> = (0..n).map(|k| (40..70).contains(&k)).collect();
    let palmas: Vec<bool> = (0..n).map(|k| k >= 80 && k < 100).collect();
    let silent: Vec<bool> = (0..n).map(|k| k >= 100).collect();
    let p = profile(&track_from(&vocal, &picked, &palmas, &silent));
    assert_eq!(p.non_silent.as_array(), [0.4, 0.3, 0.3, 0.2]);
    assert_eq!(p.n_non_silent, 100);
    assert!((p.all_decisions.pct_vocal - 40.0 / 110.0).abs() < 1e-15);
}

#[test]
fn one_hertz_sequence() {
    let mut track = track_from(&[true; 30], &[false; 30], &[false; 30], &[false; 30]);
    track.duration = 4.6;
    let seq = sequence_1hz(&track);
    assert_eq!(seq.len(), 4);
    assert!(seq.iter().all(|v| v[0] == 1 && v[2] == 0));

    // One second of voice, one second of picked guitar, alternating.
    let n = 60;
    let voice: Vec<bool> = (0..n).map(|k| (decision_time(k) as usize) % 2 == 0).collect();
    let picked: Vec<bool> = voice.iter().map(|v| !v).collect();
    let mut track = track_from(&voice, &picked, &vec![false; n], &vec![false; n]);
    track.duration = 10.0;
    for (t, v) in sequence_1hz(&track).iter().enumerate() {
        let want = if t % 2 == 0 { [1, 0, 0] } else { [0, 0, 1] };
        assert_eq!(*v, want, "second {t}");
    }
}

#[test]
fn annotation_file_roundtrip_and_svg() {
    let out = annotate_with(&tone_clip(30.0), &three_part());
    let file = AnnotationFile::new("take 1 <demo>", &out);
    let back = AnnotationFile::from_json(&file.to_json().unwrap()).unwrap();
    assert_eq!(back, file);
    let svg = render_svg(&file);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<title>").count(), file.segments.len() + file.palmas.len());
    assert!(svg.contains("&lt;demo&gt;"));

    let mut bad = file.clone();
    bad.schema_version = 99;
    assert!(AnnotationFile::from_json(&bad.to_json().unwrap()).is_err());
}

proptest! {
    #[test]
    fn segments_partition_the_timeline(
        vocal in proptest::collection::vec(any::<bool>(), 1..80),
        seed in any::<u64>(),
    ) {
        let n = vocal.len();
        let bit = |i: usize, salt: u64| (seed.rotate_left((i as u32 * 7 + salt as u32) % 64) & 1) == 1;
        let picked: Vec<bool> = (0..n).map(|i| bit(i, 1)).collect();
        let palmas: Vec<bool> = (0..n).map(|i| bit(i, 2)).collect();
        let silent: Vec<bool> = (0..n).map(|i| bit(i, 3) && bit(i, 4)).collect();
        let track = track_from(&vocal, &picked, &palmas, &silent);
        let ann = assemble(&track, &AnnotateConfig::default());
        prop_assert_eq!(ann.segments[0].start, 0.0);
        prop_assert_eq!(ann.segments.last().unwrap().end, track.duration);
        for w in ann.segments.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].label != w[1].label);
        }
        for s in &ann.segments {
            prop_assert!(s.end > s.start);
        }
        let p = profile(&track);
        if !p.all_silent {
            let sum = p.non_silent.pct_vocal + p.non_silent.pct_picked + p.non_silent.pct_strummed;
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    /// Sequences made of runs at least `window / 2 + 1` long pass through unchanged.
    #[test]
    fn long_runs_are_fixed_points(runs in proptest::collection::vec(3usize..12, 1..10), first in any::<bool>()) {
        let mut seq = Vec::new();
        let mut v = first;
        for r in runs {
            seq.extend(std::iter::repeat(v).take(r));
            v = !v;
        }
        prop_assert_eq!(median_smooth(&seq, 5).unwrap(), seq);
    }

    #[test]
    fn repeated_smoothing_reaches_a_fixed_point(seq in proptest::collection::vec(any::<bool>(), 0..60)) {
        let mut cur = seq;
        for _ in 0..=cur.len() {
            let next = median_smooth(&cur, 5).unwrap();
            if next == cur {
                break;
            }
            cur = next;
        }
        let again = median_smooth(&cur, 5).unwrap();
        prop_assert_eq!(again, cur);
    }
}
