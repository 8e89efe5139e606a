//! Pitch-class profiles from spectral peaks.
//!
//! A simplified HPCP: spectral peaks in 40-5000 Hz are mapped to the nearest
//! equal-tempered pitch class (A4 = 440 Hz) and their magnitudes accumulated.
//! There is no harmonic weighting, so overtones contribute to their own pitch
//! classes; the profile stays exactly rotation-covariant under transposition.

use super::Spectrum;
use crate::audio::TARGET_RATE;

pub const HPCP_FRAME_LEN: usize = 4096;

const F_MIN: f64 = 40.0;
const F_MAX: f64 = 5000.0;
const PEAK_FLOOR_DB: f64 = -60.0;

/// 12 non-negative bins, pitch class 0 = C.
pub type PitchClassFrame = [f64; 12];

/// 4-term Blackman-Harris; its sidelobes sit below the -60 dB peak floor so
/// a pure tone yields exactly one peak.
fn blackman_harris(n: usize) -> Vec<f64> {
    let (a0, a1, a2, a3) = (0.35875, 0.48829, 0.14128, 0.01168);
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            a0 - a1 * x.cos() + a2 * (2.0 * x).cos() - a3 * (3.0 * x).cos()
        })
        .collect()
}

/// Nearest equal-tempered pitch class of `freq` (C = 0, A = 9).
pub fn pitch_class_of(freq: f64) -> usize {
    let semis = (12.0 * (freq / 440.0).log2()).round() as i64;
    (semis + 9).rem_euclid(12) as usize
}

fn accumulate(mags: &[f64], fft_len: usize) -> PitchClassFrame {
    let mut bins = [0.0; 12];
    let max = mags.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return bins;
    }
    let floor = max * 10f64.powf(PEAK_FLOOR_DB / 20.0);
    let bin_hz = TARGET_RATE as f64 / fft_len as f64;
    for k in 1..mags.len() - 1 {
        let m = mags[k];
        if m < floor || m <= mags[k - 1] || m < mags[k + 1] {
            continue;
        }
        // Parabolic refinement on the dB spectrum.
        let db = |v: f64| 20.0 * v.max(1e-300).log10();
        let (a, b, c) = (db(mags[k - 1]), db(m), db(mags[k + 1]));
        let denom = a - 2.0 * b + c;
        let offset = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
        let freq = (k as f64 + offset) * bin_hz;
        if !(F_MIN..=F_MAX).contains(&freq) {
            continue;
        }
        let peak_db = b - 0.25 * (a - c) * offset;
        bins[pitch_class_of(freq)] += 10f64.powf(peak_db / 20.0);
    }
    bins
}

/// Unnormalized per-frame pitch-class magnitudes on non-overlapping 4096-sample frames.
pub fn hpcp_raw_frames(signal: &[f32]) -> Vec<PitchClassFrame> {
    let mut spectrum = Spectrum::new(HPCP_FRAME_LEN, blackman_harris(HPCP_FRAME_LEN));
    let mut mags = Vec::new();
    signal
        .chunks_exact(HPCP_FRAME_LEN)
        .map(|frame| {
            spectrum.magnitudes(frame, &mut mags);
            accumulate(&mags, spectrum.fft_len())
        })
        .collect()
}

/// Per-frame pitch-class profiles, each max-normalized (all-zero frames stay zero).
pub fn hpcp_frames(signal: &[f32]) -> Vec<PitchClassFrame> {
    hpcp_raw_frames(signal)
        .into_iter()
        .map(|mut f| {
            let max = f.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                f.iter_mut().for_each(|v| *v /= max);
            }
            f
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::test_signals::tone;
    use super::*;

    fn midi_hz(note: i32) -> f64 {
        440.0 * 2f64.powf((note - 69) as f64 / 12.0)
    }

    #[test]
    fn pitch_classes() {
        assert_eq!(pitch_class_of(440.0), 9);
        assert_eq!(pitch_class_of(261.63), 0);
        assert_eq!(pitch_class_of(220.0 * 2f64.powf(1.0 / 12.0)), 10);
    }

    #[test]
    fn sine_lands_in_a() {
        for f in hpcp_frames(&tone(&[(440.0, 0.8)], 0.5)) {
            assert_eq!(f[9], 1.0);
            assert!(f.iter().enumerate().all(|(i, &v)| i == 9 || v == 0.0), "{f:?}");
        }
    }

    #[test]
    fn octaves_fold_together() {
        for f in hpcp_frames(&tone(&[(440.0, 0.5), (880.0, 0.4)], 0.5)) {
            assert!(f.iter().enumerate().all(|(i, &v)| i == 9 || v == 0.0));
        }
    }

    #[test]
    fn triad_activates_three_bins() {
        let s = tone(&[(midi_hz(60), 0.3), (midi_hz(64), 0.3), (midi_hz(67), 0.3)], 0.5);
        for f in hpcp_frames(&s) {
            for (pc, &v) in f.iter().enumerate() {
                if [0, 4, 7].contains(&pc) {
                    assert!(v > 0.5, "{f:?}");
                } else {
                    assert!(v < 0.1, "{f:?}");
                }
            }
        }
    }

    #[test]
    fn transposition_rotates_profile() {
        let base = [57, 60, 64, 69, 71];
        let weights = [0.5, 0.3, 0.2, 0.25, 0.1];
        let mean = |notes: &[i32]| {
            let parts: Vec<(f64, f64)> =
                notes.iter().zip(weights).map(|(&n, w)| (midi_hz(n), w)).collect();
            let frames = hpcp_frames(&tone(&parts, 0.4));
            let mut acc = [0.0; 12];
            for f in &frames {
                for i in 0..12 {
                    acc[i] += f[i] / frames.len() as f64;
                }
            }
            acc
        };
        let reference = mean(&base);
        for k in 1..12 {
            let shifted: Vec<i32> = base.iter().map(|n| n + k).collect();
            let p = mean(&shifted);
            for i in 0..12 {
                let expect = reference[(i + 12 - k as usize) % 12];
                assert!((p[i] - expect).abs() < 0.1, "k={k} bin {i}: {} vs {expect}", p[i]);
            }
        }
    }

    #[test]
    fn silence_is_zero() {
        assert!(hpcp_frames(&vec![0.0; 8192]).iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }
}
