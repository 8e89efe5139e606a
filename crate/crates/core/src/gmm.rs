//! Diagonal-covariance Gaussian mixtures trained by EM, used as a
//! two-class maximum-likelihood baseline on averaged MFCC vectors.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::TARGET_RATE;
use crate::container::{Family, ModelBlob};
use crate::dsp::{mfcc_frame_time, MFCC_DIM, MFCC_HOP, MFCC_WINDOW};
use crate::error::{Error, Result};
use crate::task::Task;

pub const DEFAULT_COMPONENTS: usize = 16;
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// EM stops once the mean per-vector log-likelihood improves by less than this.
pub const TOLERANCE: f64 = 1e-4;
pub const MAX_ITERATIONS: usize = 200;

/// Mixture of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl DiagGmm {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Per-component log(weight) + log N(x), written into `out`.
    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = self.weights[j].ln();
            for ((&xi, &m), &v) in x.iter().zip(&self.means[j]).zip(&self.variances[j]) {
                let d = xi - m;
                s -= 0.5 * ((2.0 * PI * v).ln() + d * d / v);
            }
            *o = s;
        }
    }

    /// log p(x), computed with log-sum-exp.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.n_components()];
        self.component_log_densities(x, &mut buf);
        log_sum_exp(&buf)
    }

    fn round_to_storage(&mut self) {
        let r = |v: &mut f64| *v = *v as f32 as f64;
        self.weights.iter_mut().for_each(r);
        self.means.iter_mut().flatten().for_each(r);
        self.variances.iter_mut().flatten().for_each(r);
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Result of EM training.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: DiagGmm,
    /// Mean per-vector log-likelihood before each M-step, then of the final model.
    pub log_likelihood_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding. Stops early when every point coincides with a chosen
/// centre, so identical data yields a single centre.
fn kmeanspp<R: AsRef<[f64]>>(data: &[R], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.gen_range(0..data.len());
    let mut centres = vec![data[first].as_ref().to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x.as_ref(), &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.gen_range(0.0..total);
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = data[pick].as_ref().to_vec();
        for (di, x) in d2.iter_mut().zip(data) {
            *di = di.min(sq_dist(x.as_ref(), &c));
        }
        centres.push(c);
    }
    centres
}

/// Fit a `k`-component diagonal mixture with EM.
pub fn fit_gmm<R: AsRef<[f64]> + Sync>(data: &[R], k: usize, seed: u64) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("component count must be positive".into()));
    }
    if data.len() < k {
        return Err(Error::TooFewVectors { needed: k, got: data.len() });
    }
    let dim = data[0].as_ref().len();
    if dim == 0 || data.iter().any(|x| x.as_ref().len() != dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("{dim}-d vectors"),
            actual: "vectors of varying or zero length".into(),
        });
    }
    let n = data.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = kmeanspp(data, k, &mut rng);
    let mut global_var = vec![0.0; dim];
    let mean: Vec<f64> =
        (0..dim).map(|d| data.iter().map(|x| x.as_ref()[d]).sum::<f64>() / n).collect();
    for x in data {
        for d in 0..dim {
            global_var[d] += (x.as_ref()[d] - mean[d]).powi(2) / n;
        }
    }
    global_var.iter_mut().for_each(|v| *v = v.max(VARIANCE_FLOOR));
    let kc = centres.len();
    let mut model = DiagGmm {
        weights: vec![1.0 / kc as f64; kc],
        means: centres,
        variances: vec![global_var; kc],
    };

    let mut history = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..MAX_ITERATIONS {
        // E-step: responsibilities, in input order.
        let resp: Vec<(Vec<f64>, f64)> = data
            .par_iter()
            .map(|x| {
                let mut r = vec![0.0; model.n_components()];
                model.component_log_densities(x.as_ref(), &mut r);
                let lse = log_sum_exp(&r);
                r.iter_mut().for_each(|v| *v = (*v - lse).exp());
                (r, lse)
            })
            .collect();
        let ll = resp.iter().map(|(_, l)| l).sum::<f64>() / n;
        history.push(ll);

        // M-step.
        let kc = model.n_components();
        let mut nk = vec![0.0; kc];
        let mut sums = vec![vec![0.0; dim]; kc];
        for ((r, _), x) in resp.iter().zip(data) {
            for j in 0..kc {
                nk[j] += r[j];
                for (s, &xi) in sums[j].iter_mut().zip(x.as_ref()) {
                    *s += r[j] * xi;
                }
            }
        }
        let keep: Vec<usize> = (0..kc).filter(|&j| nk[j] > 1e-10).collect();
        let means: Vec<Vec<f64>> =
            keep.iter().map(|&j| sums[j].iter().map(|s| s / nk[j]).collect()).collect();
        let mut vars = vec![vec![0.0; dim]; keep.len()];
        for ((r, _), x) in resp.iter().zip(data) {
            for (slot, &j) in keep.iter().enumerate() {
                for d in 0..dim {
                    let diff = x.as_ref()[d] - means[slot][d];
                    vars[slot][d] += r[j] * diff * diff;
                }
            }
        }
        for (slot, &j) in keep.iter().enumerate() {
            vars[slot].iter_mut().for_each(|v| *v = (*v / nk[j]).max(VARIANCE_FLOOR));
        }
        model = DiagGmm {
            weights: keep.iter().map(|&j| nk[j] / n).collect(),
            means,
            variances: vars,
        };

        if prev.is_finite() && ll - prev < TOLERANCE {
            break;
        }
        prev = ll;
    }
    let final_ll = data.iter().map(|x| model.log_likelihood(x.as_ref())).sum::<f64>() / n;
    history.push(final_ll);
    Ok(GmmFit { model, log_likelihood_history: history })
}

/// One mixture per class; class 1 is the positive class of the task.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmClassifier {
    pub task: Task,
    pub classes: [DiagGmm; 2],
}

impl GmmClassifier {
    /// Fit one mixture per class. Parameters are rounded to f32 so saved
    /// models reload bit-exactly.
    pub fn train<R: AsRef<[f64]> + Sync>(
        task: Task,
        samples: &[(R, usize)],
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let split = |label: usize| -> Vec<&[f64]> {
            samples.iter().filter(|(_, l)| *l == label).map(|(x, _)| x.as_ref()).collect()
        };
        let (neg, pos) = (split(0), split(1));
        if neg.is_empty() || pos.is_empty() {
            return Err(Error::SingleClass);
        }
        let mut m0 = fit_gmm(&neg, k.min(neg.len()), seed)?.model;
        let mut m1 = fit_gmm(&pos, k.min(pos.len()), seed.wrapping_add(1))?.model;
        m0.round_to_storage();
        m1.round_to_storage();
        Ok(Self { task, classes: [m0, m1] })
    }

    pub fn dim(&self) -> usize {
        self.classes[0].dim()
    }

    /// Class log-likelihoods of each vector.
    pub fn scores<R: AsRef<[f64]> + Sync>(&self, features: &[R]) -> Result<Vec<[f64; 2]>> {
        let dim = self.dim();
        if let Some(bad) = features.iter().find(|x| x.as_ref().len() != dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("{dim}-d vectors"),
                actual: format!("{}-d vector", bad.as_ref().len()),
            });
        }
        Ok(features
            .par_iter()
            .map(|x| {
                [self.classes[0].log_likelihood(x.as_ref()), self.classes[1].log_likelihood(x.as_ref())]
            })
            .collect())
    }

    /// Maximum-likelihood decision per vector; equal likelihoods give class 0.
    pub fn classify<R: AsRef<[f64]> + Sync>(&self, features: &[R]) -> Result<Vec<bool>> {
        Ok(self.scores(features)?.into_iter().map(|[a, b]| b > a).collect())
    }

    /// Container layout: dims `[dim, k0, k1]`, then per class and component
    /// the weight, mean and variance.
    pub fn to_blob(&self) -> ModelBlob {
        let mut values = Vec::new();
        for g in &self.classes {
            for j in 0..g.n_components() {
                values.push(g.weights[j] as f32);
                values.extend(g.means[j].iter().map(|&v| v as f32));
                values.extend(g.variances[j].iter().map(|&v| v as f32));
            }
        }
        ModelBlob {
            family: Family::Gmm,
            task: self.task,
            dims: vec![
                self.dim() as u32,
                self.classes[0].n_components() as u32,
                self.classes[1].n_components() as u32,
            ],
            values,
        }
    }

    pub fn from_blob(blob: ModelBlob) -> Result<Self> {
        if blob.family != Family::Gmm {
            return Err(Error::ModelFormat("not a GMM model file".into()));
        }
        let [dim, k0, k1] = blob.dims[..] else {
            return Err(Error::ModelFormat(format!("unexpected GMM header {:?}", blob.dims)));
        };
        let (dim, k0, k1) = (dim as usize, k0 as usize, k1 as usize);
        if dim == 0 || k0 == 0 || k1 == 0 || blob.values.len() != (k0 + k1) * (1 + 2 * dim) {
            return Err(Error::ModelFormat("GMM weight count does not match header".into()));
        }
        let mut it = blob.values.iter().map(|&v| v as f64);
        let mut read = |k: usize| -> DiagGmm {
            let mut g = DiagGmm { weights: vec![], means: vec![], variances: vec![] };
            for _ in 0..k {
                g.weights.push(it.next().expect("length checked"));
                g.means.push(it.by_ref().take(dim).collect());
                g.variances.push(it.by_ref().take(dim).collect());
            }
            g
        };
        let classes = [read(k0), read(k1)];
        if classes.iter().flat_map(|g| g.variances.iter().flatten()).any(|&v| !(v > 0.0)) {
            return Err(Error::ModelFormat("non-positive variance".into()));
        }
        Ok(Self { task: blob.task, classes })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_blob().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_blob(ModelBlob::load(path)?)
    }
}

/// Index of the cepstral frame whose centre is nearest to `time`.
pub fn nearest_mfcc_frame(time: f64, n_frames: usize) -> usize {
    let offset = MFCC_WINDOW as f64 / 2.0 / TARGET_RATE as f64;
    let hop = MFCC_HOP as f64 / TARGET_RATE as f64;
    let i = ((time - offset) / hop).round().max(0.0) as usize;
    i.min(n_frames.saturating_sub(1))
}

/// The MFCC vector nearest to each decision instant.
pub fn features_at(mfcc: &[[f64; MFCC_DIM]], times: &[f64]) -> Vec<[f64; MFCC_DIM]> {
    if mfcc.is_empty() {
        return Vec::new();
    }
    debug_assert!((mfcc_frame_time(0) - MFCC_WINDOW as f64 / 2.0 / TARGET_RATE as f64).abs() < 1e-12);
    times.iter().map(|&t| mfcc[nearest_mfcc_frame(t, mfcc.len())]).collect()
}
