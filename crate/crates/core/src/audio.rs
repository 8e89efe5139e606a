//! Decoding, conditioning and channel views.
//!
//! Every recording goes through the same conditioning before analysis:
//! resample to [`TARGET_RATE`], peak-normalize across channels, and split into
//! a vocal view, a guitar view and the mono mix.

use std::path::Path;

use crate::dsp;
use crate::error::{Error, Result};

/// Analysis sample rate of the whole pipeline.
pub const TARGET_RATE: u32 = 44_100;

const SINC_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.0;
/// Largest reduced output rate for which the polyphase table is precomputed.
const MAX_TABLE_PHASES: u64 = 8192;

/// A decoded multi-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidRate(0.0));
        }
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::UnsupportedEncoding(format!(
                "{} channels (expected 1 or 2)",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::ShapeMismatch {
                expected: format!("all channels of length {len}"),
                actual: "ragged channels".into(),
            });
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn stereo(left: Vec<f32>, right: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![left, right], sample_rate)
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &[f32] {
        &self.channels[index]
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f32, |m, &s| m.max(s.abs()))
    }

    pub fn into_channels(self) -> Vec<Vec<f32>> {
        self.channels
    }
}

/// Decode a PCM WAV file (16/24-bit integer or 32-bit float, 1-2 channels).
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let unreadable = |e: hound::Error| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported WAV variant".into()),
        other => unreadable(other),
    })?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedEncoding(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) | (hound::SampleFormat::Int, 24) => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(unreadable)?
        }
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(unreadable)?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{bits}-bit {format:?}")));
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let n = spec.channels as usize;
    let channels = (0..n)
        .map(|c| interleaved.iter().skip(c).step_by(n).copied().collect())
        .collect();
    AudioClip::new(channels, spec.sample_rate)
}

/// Write a clip as 16-bit PCM.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::InvalidArgument(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for i in 0..clip.len() {
        for ch in clip.channels() {
            let v = (ch[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v).map_err(to_io)?;
        }
    }
    writer.finalize().map_err(to_io)
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct SincKernel {
    cutoff: f64,
    i0_beta: f64,
}

impl SincKernel {
    fn new(cutoff: f64) -> Self {
        Self { cutoff, i0_beta: bessel_i0(KAISER_BETA) }
    }

    /// Filter response at offset `x` input samples from the output instant.
    fn eval(&self, x: f64) -> f64 {
        let half = (SINC_TAPS / 2) as f64;
        let r = x / half;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        let arg = std::f64::consts::PI * self.cutoff * x;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        self.cutoff * sinc * window
    }

    fn taps(&self, frac: f64) -> [f64; SINC_TAPS] {
        let mut taps = [0.0; SINC_TAPS];
        let half = (SINC_TAPS / 2) as isize;
        for (j, tap) in taps.iter_mut().enumerate() {
            let k = j as isize - (half - 1);
            *tap = self.eval(frac - k as f64);
        }
        taps
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc (beta 8).
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidRate(target_rate as f64));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let in_rate = clip.sample_rate as u64;
    let out_rate = target_rate as u64;
    let g = gcd(in_rate, out_rate);
    let (step, phases) = (in_rate / g, out_rate / g);
    let kernel = SincKernel::new((out_rate as f64 / in_rate as f64).min(1.0));
    let out_len = ((clip.len() as u128 * out_rate as u128 + in_rate as u128 / 2) / in_rate as u128) as usize;

    let table: Option<Vec<[f64; SINC_TAPS]>> = (phases <= MAX_TABLE_PHASES)
        .then(|| (0..phases).map(|p| kernel.taps(p as f64 / phases as f64)).collect());

    let half = (SINC_TAPS / 2) as isize;
    let channels = clip
        .channels()
        .iter()
        .map(|x| {
            (0..out_len as u64)
                .map(|n| {
                    let pos = n * step;
                    let base = (pos / phases) as isize;
                    let phase = pos % phases;
                    let owned;
                    let taps = match &table {
                        Some(t) => &t[phase as usize],
                        None => {
                            owned = kernel.taps(phase as f64 / phases as f64);
                            &owned
                        }
                    };
                    let mut acc = 0.0;
                    for (j, tap) in taps.iter().enumerate() {
                        let idx = base + j as isize - (half - 1);
                        if idx >= 0 && (idx as usize) < x.len() {
                            acc += tap * x[idx as usize] as f64;
                        }
                    }
                    acc as f32
                })
                .collect()
        })
        .collect();
    AudioClip::new(channels, target_rate)
}

/// Divide all channels by the joint peak magnitude; silent clips pass through.
pub fn peak_normalize(clip: &AudioClip) -> AudioClip {
    let peak = clip.peak() as f64;
    if peak == 0.0 {
        return clip.clone();
    }
    let channels = clip
        .channels()
        .iter()
        .map(|c| c.iter().map(|&s| (s as f64 / peak) as f32).collect())
        .collect();
    AudioClip { channels, sample_rate: clip.sample_rate }
}

/// Resample to the analysis rate and peak-normalize.
pub fn condition(clip: &AudioClip) -> Result<AudioClip> {
    let resampled = resample(clip, TARGET_RATE)?;
    Ok(peak_normalize(&resampled))
}

/// The three signal views consumed by the classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalViews {
    pub vocal: Vec<f32>,
    pub guitar: Vec<f32>,
    pub mono: Vec<f32>,
    /// Index of the vocal channel for stereo input, `None` for mono.
    pub vocal_channel: Option<usize>,
    /// Channel selection had no non-silent frames to work with.
    pub selection_degenerate: bool,
}

/// Mean of the two channels, sample by sample.
pub fn mono_mix(left: &[f32], right: &[f32]) -> Vec<f32> {
    left.iter()
        .zip(right)
        .map(|(&l, &r)| ((l as f64 + r as f64) / 2.0) as f32)
        .collect()
}

/// Split a clip into vocal, guitar and mono views.
///
/// The clip is conditioned first if it is not already at [`TARGET_RATE`].
/// Mono input yields three identical views.
pub fn prepare(clip: &AudioClip) -> Result<SignalViews> {
    let conditioned;
    let clip = if clip.sample_rate() == TARGET_RATE {
        clip
    } else {
        conditioned = condition(clip)?;
        &conditioned
    };
    if clip.n_channels() == 1 {
        let mono = clip.channel(0).to_vec();
        return Ok(SignalViews {
            vocal: mono.clone(),
            guitar: mono.clone(),
            mono,
            vocal_channel: None,
            selection_degenerate: false,
        });
    }
    let (left, right) = (clip.channel(0), clip.channel(1));
    let choice = dsp::select_vocal_channel(left, right);
    let (vocal, guitar) = if choice.index == 0 { (left, right) } else { (right, left) };
    Ok(SignalViews {
        vocal: vocal.to_vec(),
        guitar: guitar.to_vec(),
        mono: mono_mix(left, right),
        vocal_channel: Some(choice.index),
        selection_degenerate: choice.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, rate: u32, secs: f64, amp: f64) -> Vec<f32> {
        let n = (rate as f64 * secs) as usize;
        (0..n)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()) as f32)
            .collect()
    }

    #[test]
    fn wav_silence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let clip = AudioClip::mono(vec![0.0; 22050], 22050).unwrap();
        write_wav(&clip, &path).unwrap();
        let loaded = load_wav(&path).unwrap();
        assert_eq!(loaded.sample_rate(), 22050);
        assert_eq!(loaded.len(), 22050);
        assert!(loaded.channel(0).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn max_positive_16bit_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(i16::MAX).unwrap();
        w.write_sample(i16::MIN).unwrap();
        w.finalize().unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.channel(0)[0], 32767.0 / 32768.0);
        assert_eq!(clip.channel(0)[1], -1.0);
    }

    #[test]
    fn decodes_24bit_and_float() {
        let dir = tempfile::tempdir().unwrap();
        let p24 = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p24, spec).unwrap();
        for v in [4_194_304i32, -4_194_304, 0, 8_388_607] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_wav(&p24).unwrap();
        assert_eq!(clip.n_channels(), 2);
        assert_eq!(clip.channel(0), &[0.5, 0.0]);
        assert_eq!(clip.channel(1)[0], -0.5);

        let pf = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 48000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&pf, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert_eq!(load_wav(&pf).unwrap().channel(0), &[0.25]);
    }

    #[test]
    fn rejects_truncated_and_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        std::fs::write(&path, b"RIFF\x10\x00\x00\x00WAVEfm").unwrap();
        assert!(matches!(load_wav(&path), Err(Error::UnreadableFile { .. })));
        assert!(matches!(
            load_wav(dir.path().join("missing.wav")),
            Err(Error::UnreadableFile { .. })
        ));

        let p8 = dir.path().join("8.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p8, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&p8), Err(Error::UnsupportedEncoding(_))));
    }

    #[test]
    fn rejects_empty_audio() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        hound::WavWriter::create(&path, spec).unwrap().finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(Error::EmptyAudio)));
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let clip = AudioClip::mono(sine(440.0, 44100, 0.1, 0.5), 44100).unwrap();
        assert_eq!(resample(&clip, 44100).unwrap(), clip);
    }

    #[test]
    fn resample_length_arithmetic() {
        let clip = AudioClip::mono(sine(440.0, 22050, 1.0, 0.5), 22050).unwrap();
        let out = resample(&clip, 44100).unwrap();
        assert!((out.len() as i64 - 44100).abs() <= 1);
        assert!(resample(&clip, 0).is_err());
    }

    #[test]
    fn resampled_sine_keeps_its_frequency() {
        let clip = AudioClip::mono(sine(440.0, 48000, 1.0, 0.8), 48000).unwrap();
        let out = resample(&clip, 44100).unwrap();
        // Oracle: plain O(n^2)-free DFT magnitude scan over candidate bins.
        let x = out.channel(0);
        let n = x.len();
        let bin_hz = 44100.0 / n as f64;
        let mag = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &s) in x.iter().enumerate() {
                let ph = 2.0 * PI * k as f64 * i as f64 / n as f64;
                re += s as f64 * ph.cos();
                im -= s as f64 * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let peak = (300..600).max_by(|&a, &b| mag(a).total_cmp(&mag(b))).unwrap();
        assert!((peak as f64 * bin_hz - 440.0).abs() <= bin_hz);
    }

    #[test]
    fn resample_roundtrip_preserves_duration() {
        for (r1, r2) in [(44100u32, 48000u32), (22050, 44100), (16000, 44100), (44100, 11025)] {
            let clip = AudioClip::mono(sine(300.0, r1, 0.37, 0.5), r1).unwrap();
            let back = resample(&resample(&clip, r2).unwrap(), r1).unwrap();
            assert!((back.len() as i64 - clip.len() as i64).abs() <= 2, "{r1}->{r2}");
        }
    }

    #[test]
    fn normalization_is_joint_and_skips_silence() {
        let clip = AudioClip::stereo(vec![0.25, -0.5], vec![0.1, 0.0], 44100).unwrap();
        let n = peak_normalize(&clip);
        assert_eq!(n.channel(0), &[0.5, -1.0]);
        assert_eq!(n.channel(1)[0], 0.2);
        let silent = AudioClip::mono(vec![0.0; 10], 44100).unwrap();
        assert_eq!(peak_normalize(&silent), silent);
    }

    #[test]
    fn mono_views_coincide() {
        let clip = AudioClip::mono(sine(220.0, 44100, 0.5, 1.0), 44100).unwrap();
        let v = prepare(&clip).unwrap();
        assert_eq!(v.vocal, v.mono);
        assert_eq!(v.guitar, v.mono);
        assert_eq!(v.vocal_channel, None);
    }

    #[test]
    fn antiphase_stereo_cancels() {
        let l = sine(220.0, 44100, 0.5, 1.0);
        let r: Vec<f32> = l.iter().map(|s| -s).collect();
        let v = prepare(&AudioClip::stereo(l, r, 44100).unwrap()).unwrap();
        assert!(v.mono.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn identical_channels_mix_exactly() {
        let l = sine(220.0, 44100, 0.2, 0.9);
        assert_eq!(mono_mix(&l, &l), l);
    }

    #[test]
    fn high_band_channel_becomes_vocal() {
        let l = sine(1000.0, 44100, 1.0, 1.0);
        let r = sine(100.0, 44100, 1.0, 1.0);
        let v = prepare(&AudioClip::stereo(l.clone(), r.clone(), 44100).unwrap()).unwrap();
        assert_eq!(v.vocal_channel, Some(0));
        assert_eq!(v.vocal, l);
        assert_eq!(v.guitar, r);
        let swapped = prepare(&AudioClip::stereo(r, l.clone(), 44100).unwrap()).unwrap();
        assert_eq!(swapped.vocal_channel, Some(1));
        assert_eq!(swapped.vocal, l);
    }
}
