use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shape::*;
use super::*;
use crate::images::{normalize_image, FeatureImage};

fn random_image(rng: &mut ChaCha8Rng) -> FeatureImage {
    let mut img = FeatureImage::zeros(11);
    img.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
    normalize_image(img)
}

/// Class 1 images carry energy in the upper bands, class 0 in the lower ones.
fn banded_image(rng: &mut ChaCha8Rng, label: usize) -> FeatureImage {
    let mut img = FeatureImage::zeros(11);
    for band in 0..IN_H {
        let loud = (band >= IN_H / 2) == (label == 1);
        for frame in 0..IN_W {
            let base = if loud { 0.6 } else { 0.1 };
            img.set(band, frame, base + rng.gen_range(0.0..0.4));
        }
    }
    normalize_image(img)
}

fn loss(model: &CnnModel, batch: &[Sample<'_>]) -> f64 {
    batch.iter().map(|(img, l)| cross_entropy(model.forward(img).unwrap(), *l)).sum::<f64>()
        / batch.len() as f64
}

#[test]
fn zero_model_is_undecided() {
    let m = CnnModel::zeros(Task::Vocal);
    let p = m.forward(&FeatureImage::zeros(11)).unwrap();
    assert_eq!(p, [0.5, 0.5]);
    let d = predict_sequence(&m, &[FeatureImage::zeros(11)]).unwrap();
    assert!(!d[0].positive, "ties go to class 0");
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = CnnModel::init(Task::Guitar, 3);
    for _ in 0..5 {
        let p = m.forward(&random_image(&mut rng)).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn shapes_follow_the_chain() {
    let m = CnnModel::init(Task::Vocal, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (_, dump) = m.forward_with_activations(&random_image(&mut rng)).unwrap();
    assert_eq!(dump.conv1.len(), FILTERS);
    assert_eq!((dump.conv1[0].height, dump.conv1[0].width), (126, 20));
    assert_eq!((dump.conv2[0].height, dump.conv2[0].width), (61, 8));
    assert_eq!(m.trace(&random_image(&mut rng)).unwrap().flattened().len(), 1920);
    assert!(dump.conv1.iter().flat_map(|m| &m.values).all(|&v| v >= 0.0));
}

#[test]
fn wrong_image_size_is_rejected() {
    let m = CnnModel::zeros(Task::Vocal);
    let mut img = FeatureImage::zeros(11);
    img.data.pop();
    assert!(matches!(m.forward(&img), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn init_and_forward_are_deterministic() {
    let a = CnnModel::init(Task::Palmas, 42);
    let b = CnnModel::init(Task::Palmas, 42);
    assert_eq!(a, b);
    assert_ne!(a, CnnModel::init(Task::Palmas, 43));
    let img = random_image(&mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(a.forward(&img).unwrap(), b.forward(&img).unwrap());
}

#[test]
fn pooling_takes_block_maxima() {
    let m = CnnModel::init(Task::Vocal, 5);
    let t = m.trace(&random_image(&mut ChaCha8Rng::seed_from_u64(5))).unwrap();
    for c in 0..FILTERS {
        for px in 0..P1_W {
            for py in 0..P1_H {
                let at = |x: usize, y: usize| t.a1[(c * C1_W + x) * C1_H + y];
                let block = [
                    at(2 * px, 2 * py),
                    at(2 * px + 1, 2 * py),
                    at(2 * px, 2 * py + 1),
                    at(2 * px + 1, 2 * py + 1),
                ];
                let max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(t.p1[(c * P1_W + px) * P1_H + py], max);
            }
        }
    }
}

#[test]
fn conv1_matches_direct_sum() {
    let m = CnnModel::init(Task::Vocal, 9);
    let img = random_image(&mut ChaCha8Rng::seed_from_u64(9));
    let t = m.trace(&img).unwrap();
    let p = m.params();
    for &(f, y, x) in &[(0usize, 0usize, 0usize), (7, 100, 13), (15, 125, 19)] {
        let mut s = p[CONV1_W + f];
        for ky in 0..3 {
            for kx in 0..3 {
                s += p[f * 9 + ky * 3 + kx] * img.get(y + ky, x + kx) as f64;
            }
        }
        let got = t.a1[(f * C1_W + x) * C1_H + y];
        assert!((got - s.max(0.0)).abs() < 1e-12, "{got} vs {s}");
    }
}

fn pattern(t: &Trace<f64>) -> Vec<u32> {
    t.switch_pattern()
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = CnnModel::init(Task::Vocal, 11);
    // Non-zero biases so the bias gradients are exercised away from zero.
    for p in &mut model.params_mut()[CONV1_W..CONV1_W + FILTERS] {
        *p = 0.05;
    }
    let images: Vec<FeatureImage> = (0..4).map(|_| random_image(&mut rng)).collect();
    let batch: Vec<Sample<'_>> = images.iter().zip([0, 1, 1, 0]).collect();
    let (grad, _) = gradients(&model, &batch).unwrap();

    let base: Vec<Vec<u32>> = images.iter().map(|i| pattern(&model.trace(i).unwrap())).collect();
    let conv2 = CONV1_W + FILTERS;
    let dense = conv2 + CONV2_W + FILTERS;
    let out = dense + DENSE_W + HIDDEN;
    let mut idx: Vec<usize> = (0..conv2).chain(out..N_PARAMS).collect();
    idx.extend((0..60).map(|_| rng.gen_range(conv2..dense)));
    idx.extend((0..200).map(|_| rng.gen_range(dense..out)));

    let h = 1e-5;
    let (mut checked, mut skipped) = (0, 0);
    for &i in &idx {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = loss(&model, &batch);
        let kink_up = images.iter().zip(&base).any(|(img, b)| pattern(&model.trace(img).unwrap()) != *b);
        model.params_mut()[i] = orig - h;
        let down = loss(&model, &batch);
        let kink_down = images.iter().zip(&base).any(|(img, b)| pattern(&model.trace(img).unwrap()) != *b);
        model.params_mut()[i] = orig;
        if kink_up || kink_down {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let denom = (numeric.abs() + grad[i].abs()).max(1e-7);
        let rel = (numeric - grad[i]).abs() / denom;
        assert!(rel < 1e-4, "param {i}: analytic {} numeric {numeric}", grad[i]);
        checked += 1;
    }
    assert!(skipped * 5 <= idx.len(), "{skipped} of {} parameters sat on a kink", idx.len());
    assert!(checked > 300);
}

#[test]
fn duplicated_batch_has_same_mean_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = CnnModel::init(Task::Vocal, 2);
    let img = random_image(&mut rng);
    let (g1, l1) = gradients(&model, &[(&img, 1)]).unwrap();
    let (g2, l2) = gradients(&model, &[(&img, 1), (&img, 1)]).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn saturated_correct_output_has_no_gradient() {
    let mut model = CnnModel::zeros(Task::Vocal);
    let n = model.params().len();
    model.params_mut()[n - 1] = 60.0;
    let img = random_image(&mut ChaCha8Rng::seed_from_u64(4));
    let (g, l) = gradients(&model, &[(&img, 1)]).unwrap();
    assert!(l < 1e-20);
    assert!(g.iter().all(|v| v.abs() < 1e-20));
}

#[test]
fn adam_step_lowers_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut model = CnnModel::init(Task::Vocal, 8);
    let images: Vec<FeatureImage> = (0..8).map(|i| banded_image(&mut rng, i % 2)).collect();
    let batch: Vec<Sample<'_>> = images.iter().zip([0, 1, 0, 1, 0, 1, 0, 1]).collect();
    let mut state = AdamState::new(N_PARAMS);
    let before = loss(&model, &batch);
    for _ in 0..5 {
        let (g, _) = gradients(&model, &batch).unwrap();
        adam_step(&mut state, &mut model, &g, &AdamConfig::default()).unwrap();
    }
    assert!(loss(&model, &batch) < before);
}

fn banded_set(n: usize, seed: u64) -> Vec<(FeatureImage, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| (banded_image(&mut rng, i % 2), i % 2)).collect()
}

#[test]
fn zero_learning_rate_stops_after_patience() {
    let data = banded_set(16, 1);
    let samples: Vec<Sample<'_>> = data.iter().map(|(i, l)| (i, *l)).collect();
    let mut cfg = TrainConfig { batch_size: 8, ..TrainConfig::default() };
    cfg.adam.learning_rate = 0.0;
    let out = train(Task::Vocal, &samples, &cfg).unwrap();
    assert_eq!(out.loss_history.len(), 6);
    assert!(out.stopped_early);
    assert_eq!(out.model, CnnModel::init(Task::Vocal, cfg.seed));
}

#[test]
fn single_class_is_rejected() {
    let data = banded_set(4, 1);
    let samples: Vec<Sample<'_>> = data.iter().map(|(i, _)| (i, 1)).collect();
    assert!(matches!(train(Task::Vocal, &samples, &TrainConfig::default()), Err(Error::SingleClass)));
}

#[test]
fn learns_a_separable_problem() {
    let data = banded_set(96, 2);
    let samples: Vec<Sample<'_>> = data.iter().map(|(i, l)| (i, *l)).collect();
    let cfg = TrainConfig { max_epochs: 8, batch_size: 16, ..TrainConfig::default() };
    let out = train(Task::Guitar, &samples, &cfg).unwrap();
    let test = banded_set(64, 3);
    let images: Vec<FeatureImage> = test.iter().map(|(i, _)| i.clone()).collect();
    let pred = predict_sequence(&out.model, &images).unwrap();
    let correct = pred.iter().zip(&test).filter(|(p, (_, l))| p.positive == (*l == 1)).count();
    assert!(correct as f64 / test.len() as f64 >= 0.95, "{correct}/64");
    assert!(out.loss_history.last() < out.loss_history.first());
}

#[test]
fn training_is_reproducible_in_both_precisions() {
    let data = banded_set(20, 4);
    let samples: Vec<Sample<'_>> = data.iter().map(|(i, l)| (i, *l)).collect();
    for precision in [Precision::Single, Precision::Double] {
        let cfg = TrainConfig { max_epochs: 2, batch_size: 8, precision, ..TrainConfig::default() };
        let a = train(Task::Vocal, &samples, &cfg).unwrap();
        let b = train(Task::Vocal, &samples, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_history, b.loss_history);
    }
}

#[test]
fn save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocal.model");
    let m = CnnModel::init(Task::Vocal, 21);
    m.save(&path).unwrap();
    let back = CnnModel::load(&path).unwrap();
    assert_eq!(back, m);
    let img = random_image(&mut ChaCha8Rng::seed_from_u64(21));
    assert_eq!(back.forward(&img).unwrap(), m.forward(&img).unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[..8].copy_from_slice(b"NOTMODEL");
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(CnnModel::load(&path), Err(Error::ModelFormat(_))));

    let mut blob = m.to_blob();
    blob.family = crate::container::Family::Gmm;
    assert!(CnnModel::from_blob(blob).is_err());
}
