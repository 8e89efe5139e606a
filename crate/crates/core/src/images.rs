//! 128x22 mel-energy images, one per decision instant.

use crate::audio::TARGET_RATE;
use crate::dsp::{MelFrameSequence, FRAME_LEN, N_MEL_BANDS};

pub const IMAGE_HEIGHT: usize = N_MEL_BANDS;
pub const IMAGE_WIDTH: usize = 22;
/// Frames between consecutive images.
pub const IMAGE_HOP: usize = 5;
/// Offset of the decision frame inside an image (right of the middle for even widths).
pub const CENTER_OFFSET: usize = IMAGE_WIDTH / 2;

/// Seconds between consecutive decisions (~0.232 s).
pub const DECISION_HOP: f64 = (IMAGE_HOP * FRAME_LEN) as f64 / TARGET_RATE as f64;

/// Time of the decision attached to the image starting at frame `5k`.
pub fn decision_time(k: usize) -> f64 {
    ((k * IMAGE_HOP + CENTER_OFFSET) * FRAME_LEN) as f64 / TARGET_RATE as f64
}

/// Number of images produced from `n_frames` mel frames.
pub fn image_count(n_frames: usize) -> usize {
    if n_frames < IMAGE_WIDTH {
        0
    } else {
        (n_frames - IMAGE_WIDTH) / IMAGE_HOP + 1
    }
}

/// A 128 (mel band) x 22 (frame) matrix stored row-major by band.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub data: Vec<f32>,
    pub center_frame: usize,
    pub center_time: f64,
}

impl FeatureImage {
    pub fn zeros(center_frame: usize) -> Self {
        Self {
            data: vec![0.0; IMAGE_HEIGHT * IMAGE_WIDTH],
            center_frame,
            center_time: (center_frame * FRAME_LEN) as f64 / TARGET_RATE as f64,
        }
    }

    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.data[band * IMAGE_WIDTH + frame]
    }

    pub fn set(&mut self, band: usize, frame: usize, value: f32) {
        self.data[band * IMAGE_WIDTH + frame] = value;
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// Divide every entry by the largest magnitude; all-zero images are returned unchanged.
pub fn normalize_image(mut image: FeatureImage) -> FeatureImage {
    let max = image.max_abs();
    if max > 0.0 {
        image.data.iter_mut().for_each(|v| *v /= max);
    }
    image
}

/// Images extracted from one mel sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    pub images: Vec<FeatureImage>,
    /// Fewer than 22 frames were available.
    pub short_input: bool,
}

/// Slide a 22-frame window with hop 5 over the mel frames and normalize each image.
pub fn build_images(mel: &MelFrameSequence) -> ImageSequence {
    let count = image_count(mel.len());
    let images = (0..count)
        .map(|k| {
            let start = k * IMAGE_HOP;
            let mut data = vec![0.0f32; IMAGE_HEIGHT * IMAGE_WIDTH];
            let max = mel.frames[start..start + IMAGE_WIDTH]
                .iter()
                .flat_map(|f| f.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
            for (j, frame) in mel.frames[start..start + IMAGE_WIDTH].iter().enumerate() {
                for (band, &e) in frame.iter().enumerate() {
                    data[band * IMAGE_WIDTH + j] = (e * scale) as f32;
                }
            }
            FeatureImage {
                data,
                center_frame: start + CENTER_OFFSET,
                center_time: decision_time(k),
            }
        })
        .collect();
    ImageSequence { images, short_input: mel.len() < IMAGE_WIDTH }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mel_energies;
    use proptest::prelude::*;

    fn ramp_mel(n: usize) -> MelFrameSequence {
        let frames = (0..n)
            .map(|i| {
                let mut f = [0.0; N_MEL_BANDS];
                for (b, v) in f.iter_mut().enumerate() {
                    *v = (i * 7 + b) as f64 + 1.0;
                }
                f
            })
            .collect();
        MelFrameSequence { frames, log_scaled: false }
    }

    #[test]
    fn boundary_and_count_examples() {
        let one = build_images(&ramp_mel(22));
        assert_eq!(one.images.len(), 1);
        assert_eq!(one.images[0].center_frame, 11);
        assert_eq!(build_images(&ramp_mel(47)).images.len(), 6);
        let short = build_images(&ramp_mel(21));
        assert!(short.images.is_empty() && short.short_input);
    }

    #[test]
    fn one_second_is_about_22_frames() {
        let frames_per_second = TARGET_RATE as f64 / FRAME_LEN as f64;
        assert!((frames_per_second - 21.53).abs() < 0.01);
        assert!((DECISION_HOP - 0.2322).abs() < 1e-4);
    }

    #[test]
    fn image_k_covers_its_frames() {
        let mel = ramp_mel(40);
        let seq = build_images(&mel);
        let img = &seq.images[2];
        let max = mel.frames[10..32].iter().flat_map(|f| f.iter()).fold(0.0f64, |m, v| m.max(*v));
        assert_eq!(img.get(3, 0), (mel.frames[10][3] / max) as f32);
        assert_eq!(img.get(127, 21), 1.0);
        assert_eq!(img.center_frame, 21);
        assert!((img.center_time - 21.0 * 2048.0 / 44100.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_examples() {
        let mut img = FeatureImage::zeros(11);
        img.set(0, 0, 2.0);
        img.set(5, 5, -1.0);
        let n = normalize_image(img.clone());
        assert_eq!(n.get(0, 0), 1.0);
        assert_eq!(n.get(5, 5), -0.5);
        let z = FeatureImage::zeros(11);
        assert_eq!(normalize_image(z.clone()), z);
        let mut scaled = img.clone();
        scaled.data.iter_mut().for_each(|v| *v *= 10.0);
        let a = normalize_image(scaled);
        for (x, y) in a.data.iter().zip(&n.data) {
            assert!((x - y).abs() <= 1e-7);
        }
    }

    #[test]
    fn gain_invariance_of_images() {
        let sig = crate::dsp::test_signals::noise(5, 2048 * 30);
        let loud: Vec<f32> = sig.iter().map(|s| s * 0.25).collect();
        let a = build_images(&mel_energies(&sig, false));
        let b = build_images(&mel_energies(&loud, false));
        for (x, y) in a.images.iter().zip(&b.images) {
            for (p, q) in x.data.iter().zip(&y.data) {
                assert!((p - q).abs() <= 1e-5);
            }
        }
    }

    proptest! {
        #[test]
        fn count_matches_enumeration(n in 0usize..400) {
            let mut expected = 0;
            let mut start = 0;
            while start + IMAGE_WIDTH <= n {
                expected += 1;
                start += IMAGE_HOP;
            }
            prop_assert_eq!(image_count(n), expected);
        }
    }
}
