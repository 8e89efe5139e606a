use super::{hann, Spectrum, FRAME_LEN};
use crate::audio::TARGET_RATE;

/// Mel bands per analysis frame (image height).
pub const N_MEL_BANDS: usize = 128;

/// 23 ms analysis window of the cepstral features, in samples.
pub const MFCC_WINDOW: usize = 1014;
/// 10 ms hop of the cepstral features, in samples.
pub const MFCC_HOP: usize = 441;
/// 13 cepstral coefficients plus first and second differences.
pub const MFCC_DIM: usize = 39;

const N_CEPSTRA: usize = 13;
const MFCC_BANDS: usize = 26;
const MFCC_FFT: usize = 1024;
/// Half-width, in hops, of the 1 s moving average over the cepstral sequence.
const MFCC_AVERAGE_HALF: usize = 50;
const DELTA_SPAN: usize = 2;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale, unit peak height.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Per band: first bin and the weights from there on.
    rows: Vec<(usize, Vec<f64>)>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(n_bands: usize, fft_len: usize, rate: u32, f_min: f64, f_max: f64) -> Self {
        let n_bins = fft_len / 2 + 1;
        let bin_hz = rate as f64 / fft_len as f64;
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_bands + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_bands + 1) as f64))
            .collect();
        let rows = edges
            .windows(3)
            .map(|w| {
                let (lo, centre, hi) = (w[0], w[1], w[2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let v = if f > lo && f <= centre {
                            (f - lo) / (centre - lo)
                        } else if f > centre && f < hi {
                            (hi - f) / (hi - centre)
                        } else {
                            0.0
                        };
                        (v > 0.0).then_some((k, v))
                    })
                    .collect();
                let start = weights.first().map_or(0, |w| w.0);
                let end = weights.last().map_or(0, |w| w.0 + 1);
                let mut dense = vec![0.0; end.saturating_sub(start)];
                for (k, v) in weights {
                    dense[k - start] = v;
                }
                (start, dense)
            })
            .collect();
        Self { rows, n_bins }
    }

    /// The 128-band bank over 0-22050 Hz on a 2048-point DFT.
    pub fn standard() -> Self {
        Self::new(N_MEL_BANDS, FRAME_LEN, TARGET_RATE, 0.0, TARGET_RATE as f64 / 2.0)
    }

    pub fn n_bands(&self) -> usize {
        self.rows.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Total weight of each filter.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|(_, w)| w.iter().sum()).collect()
    }

    /// Weight of band `band` at DFT bin `bin`.
    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        let (start, w) = &self.rows[band];
        bin.checked_sub(*start).and_then(|i| w.get(i)).copied().unwrap_or(0.0)
    }

    pub fn apply(&self, spectrum: &[f64], out: &mut [f64]) {
        for ((start, w), o) in self.rows.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&spectrum[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Per-frame mel-band energies on the non-overlapping 2048-sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFrameSequence {
    pub frames: Vec<[f64; N_MEL_BANDS]>,
    pub log_scaled: bool,
}

impl MelFrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Hann-windowed power spectrum through the 128-band mel bank, one vector
/// per 2048-sample frame. With `log_scaled` each energy becomes `ln(1 + e)`.
pub fn mel_energies(signal: &[f32], log_scaled: bool) -> MelFrameSequence {
    let bank = MelFilterbank::standard();
    let mut spectrum = Spectrum::new(FRAME_LEN, hann(FRAME_LEN));
    let mut power = Vec::with_capacity(FRAME_LEN / 2 + 1);
    let frames = signal
        .chunks_exact(FRAME_LEN)
        .map(|frame| {
            spectrum.powers(frame, &mut power);
            let mut bands = [0.0; N_MEL_BANDS];
            bank.apply(&power, &mut bands);
            if log_scaled {
                bands.iter_mut().for_each(|e| *e = e.ln_1p());
            }
            bands
        })
        .collect();
    MelFrameSequence { frames, log_scaled }
}

/// Centre time in seconds of cepstral frame `index`.
pub fn mfcc_frame_time(index: usize) -> f64 {
    (index * MFCC_HOP + MFCC_WINDOW / 2) as f64 / TARGET_RATE as f64
}

fn dct_matrix() -> Vec<[f64; MFCC_BANDS]> {
    let n = MFCC_BANDS as f64;
    (0..N_CEPSTRA)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let mut row = [0.0; MFCC_BANDS];
            for (i, r) in row.iter_mut().enumerate() {
                *r = scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos();
            }
            row
        })
        .collect()
}

fn deltas(seq: &[[f64; N_CEPSTRA]]) -> Vec<[f64; N_CEPSTRA]> {
    let n = seq.len();
    let norm: f64 = 2.0 * (1..=DELTA_SPAN).map(|d| (d * d) as f64).sum::<f64>();
    (0..n)
        .map(|t| {
            let mut out = [0.0; N_CEPSTRA];
            for d in 1..=DELTA_SPAN {
                let next = &seq[(t + d).min(n - 1)];
                let prev = &seq[t.saturating_sub(d)];
                for c in 0..N_CEPSTRA {
                    out[c] += d as f64 * (next[c] - prev[c]);
                }
            }
            out.iter_mut().for_each(|v| *v /= norm);
            out
        })
        .collect()
}

/// Short-term MFCC + delta + delta-delta vectors (23 ms window, 10 ms hop),
/// without the long-term averaging.
pub fn mfcc_raw(signal: &[f32]) -> Vec<[f64; MFCC_DIM]> {
    if signal.len() < MFCC_WINDOW {
        return Vec::new();
    }
    let n_frames = (signal.len() - MFCC_WINDOW) / MFCC_HOP + 1;
    let bank = MelFilterbank::new(MFCC_BANDS, MFCC_FFT, TARGET_RATE, 0.0, TARGET_RATE as f64 / 2.0);
    let dct = dct_matrix();
    let mut spectrum = Spectrum::new(MFCC_FFT, hann(MFCC_WINDOW));
    let mut power = Vec::new();
    let mut bands = [0.0; MFCC_BANDS];
    let cepstra: Vec<[f64; N_CEPSTRA]> = (0..n_frames)
        .map(|i| {
            let start = i * MFCC_HOP;
            spectrum.powers(&signal[start..start + MFCC_WINDOW], &mut power);
            bank.apply(&power, &mut bands);
            let logs: Vec<f64> = bands.iter().map(|e| e.max(1e-10).ln()).collect();
            let mut c = [0.0; N_CEPSTRA];
            for (k, row) in dct.iter().enumerate() {
                c[k] = row.iter().zip(&logs).map(|(a, b)| a * b).sum();
            }
            c
        })
        .collect();
    let d1 = deltas(&cepstra);
    let d2 = deltas(&d1);
    cepstra
        .iter()
        .zip(&d1)
        .zip(&d2)
        .map(|((c, a), b)| {
            let mut v = [0.0; MFCC_DIM];
            v[..N_CEPSTRA].copy_from_slice(c);
            v[N_CEPSTRA..2 * N_CEPSTRA].copy_from_slice(a);
            v[2 * N_CEPSTRA..].copy_from_slice(b);
            v
        })
        .collect()
}

/// MFCC + deltas smoothed by a centred 1 s (101-hop) moving average; the
/// window shrinks at the edges. One vector per 10 ms hop.
pub fn mfcc_features(signal: &[f32]) -> Vec<[f64; MFCC_DIM]> {
    let raw = mfcc_raw(signal);
    let n = raw.len();
    // Prefix sums keep the average O(n).
    let mut prefix = vec![[0.0; MFCC_DIM]; n + 1];
    for (i, v) in raw.iter().enumerate() {
        for d in 0..MFCC_DIM {
            prefix[i + 1][d] = prefix[i][d] + v[d];
        }
    }
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(MFCC_AVERAGE_HALF);
            let hi = (t + MFCC_AVERAGE_HALF + 1).min(n);
            let count = (hi - lo) as f64;
            let mut v = [0.0; MFCC_DIM];
            for d in 0..MFCC_DIM {
                v[d] = (prefix[hi][d] - prefix[lo][d]) / count;
            }
            v
        })
        .collect()
}
