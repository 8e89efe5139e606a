//! Forward and backward passes of the two-conv-layer network.
//!
//! Feature maps are stored channel-major, then frame (width), then mel band
//! (height), so the innermost loops run over the long band axis.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub};

use super::shape::*;
use crate::images::FeatureImage;

/// Floating-point scalar the kernels are generic over.
pub trait Real:
    Copy
    + Default
    + PartialOrd
    + Send
    + Sync
    + std::fmt::Debug
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                <$t>::powi(self, n)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Borrowed views of the parameter vector, in storage order.
pub(crate) struct ParamView<'a, T> {
    pub conv1_w: &'a [T],
    pub conv1_b: &'a [T],
    pub conv2_w: &'a [T],
    pub conv2_b: &'a [T],
    pub dense_w: &'a [T],
    pub dense_b: &'a [T],
    pub out_w: &'a [T],
    pub out_b: &'a [T],
}

pub(crate) struct ParamViewMut<'a, T> {
    pub conv1_w: &'a mut [T],
    pub conv1_b: &'a mut [T],
    pub conv2_w: &'a mut [T],
    pub conv2_b: &'a mut [T],
    pub dense_w: &'a mut [T],
    pub dense_b: &'a mut [T],
    pub out_w: &'a mut [T],
    pub out_b: &'a mut [T],
}

pub(crate) fn split<T>(p: &[T]) -> ParamView<'_, T> {
    assert_eq!(p.len(), N_PARAMS);
    let (conv1_w, r) = p.split_at(CONV1_W);
    let (conv1_b, r) = r.split_at(FILTERS);
    let (conv2_w, r) = r.split_at(CONV2_W);
    let (conv2_b, r) = r.split_at(FILTERS);
    let (dense_w, r) = r.split_at(DENSE_W);
    let (dense_b, r) = r.split_at(HIDDEN);
    let (out_w, out_b) = r.split_at(OUT_W);
    ParamView { conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b, out_w, out_b }
}

pub(crate) fn split_mut<T>(p: &mut [T]) -> ParamViewMut<'_, T> {
    assert_eq!(p.len(), N_PARAMS);
    let (conv1_w, r) = p.split_at_mut(CONV1_W);
    let (conv1_b, r) = r.split_at_mut(FILTERS);
    let (conv2_w, r) = r.split_at_mut(CONV2_W);
    let (conv2_b, r) = r.split_at_mut(FILTERS);
    let (dense_w, r) = r.split_at_mut(DENSE_W);
    let (dense_b, r) = r.split_at_mut(HIDDEN);
    let (out_w, out_b) = r.split_at_mut(OUT_W);
    ParamViewMut { conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b, out_w, out_b }
}

/// Every intermediate of one forward pass; reused across samples.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub(crate) input: Vec<T>,
    /// relu(conv1), FILTERS x C1_W x C1_H.
    pub(crate) a1: Vec<T>,
    pub(crate) p1: Vec<T>,
    pub(crate) p1_arg: Vec<u32>,
    /// relu(conv2), FILTERS x C2_W x C2_H.
    pub(crate) a2: Vec<T>,
    /// Flattened pooled conv2 output (1920).
    pub(crate) p2: Vec<T>,
    pub(crate) p2_arg: Vec<u32>,
    pub(crate) hidden: Vec<T>,
    pub(crate) probs: [T; CLASSES],
}

impl<T: Real> Default for Trace<T> {
    fn default() -> Self {
        Self {
            input: vec![T::ZERO; IN_W * IN_H],
            a1: vec![T::ZERO; FILTERS * C1_W * C1_H],
            p1: vec![T::ZERO; FILTERS * P1_W * P1_H],
            p1_arg: vec![0; FILTERS * P1_W * P1_H],
            a2: vec![T::ZERO; FILTERS * C2_W * C2_H],
            p2: vec![T::ZERO; FLAT],
            p2_arg: vec![0; FLAT],
            hidden: vec![T::ZERO; HIDDEN],
            probs: [T::ZERO; CLASSES],
        }
    }
}

impl<T: Real> Trace<T> {
    pub fn probabilities(&self) -> [f64; CLASSES] {
        [self.probs[0].to_f64(), self.probs[1].to_f64()]
    }

    pub fn flattened(&self) -> &[T] {
        &self.p2
    }

    /// Every piecewise decision of the pass: relu on/off for each unit, then
    /// the argmax of each pooling window. Two passes with equal patterns lie
    /// on the same smooth piece of the loss.
    pub fn switch_pattern(&self) -> Vec<u32> {
        let mut v: Vec<u32> =
            self.a1.iter().chain(&self.a2).chain(&self.hidden).map(|&a| u32::from(a.to_f64() > 0.0)).collect();
        v.extend(&self.p1_arg);
        v.extend(&self.p2_arg);
        v
    }
}

/// Valid 3x3 convolution followed by relu.
#[allow(clippy::too_many_arguments)]
fn conv_relu<T: Real>(
    input: &[T],
    in_c: usize,
    in_w: usize,
    in_h: usize,
    weights: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (out_w, out_h) = (in_w - KERNEL + 1, in_h - KERNEL + 1);
    for (f, o) in out.chunks_exact_mut(out_w * out_h).enumerate() {
        o.fill(bias[f]);
        for c in 0..in_c {
            let plane = &input[c * in_w * in_h..(c + 1) * in_w * in_h];
            for kx in 0..KERNEL {
                for ky in 0..KERNEL {
                    let w = weights[((f * in_c + c) * KERNEL + ky) * KERNEL + kx];
                    for (x, dst) in o.chunks_exact_mut(out_h).enumerate() {
                        let src = &plane[(x + kx) * in_h + ky..][..out_h];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
        for v in o.iter_mut() {
            if *v < T::ZERO {
                *v = T::ZERO;
            }
        }
    }
}

/// 2x2 max pooling with floor division; records the winning input index.
fn max_pool<T: Real>(input: &[T], in_w: usize, in_h: usize, out: &mut [T], arg: &mut [u32]) {
    let (out_w, out_h) = (in_w / 2, in_h / 2);
    for c in 0..FILTERS {
        let base = c * in_w * in_h;
        for px in 0..out_w {
            for py in 0..out_h {
                let mut best = base + (2 * px) * in_h + 2 * py;
                for (dx, dy) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * px + dx) * in_h + 2 * py + dy;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                let o = (c * out_w + px) * out_h + py;
                out[o] = input[best];
                arg[o] = best as u32;
            }
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // Independent partial sums let the compiler vectorize without reassociation.
    let mut acc = [T::ZERO; 8];
    let (ca, ra) = a.split_at(a.len() / 8 * 8);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Copy a band-major image into the width-major input layout.
pub(crate) fn load_input<T: Real>(image: &FeatureImage, dst: &mut [T]) {
    for band in 0..IN_H {
        let row = &image.data[band * IN_W..(band + 1) * IN_W];
        for (frame, &v) in row.iter().enumerate() {
            dst[frame * IN_H + band] = T::from_f64(v as f64);
        }
    }
}

pub(crate) fn forward<T: Real>(params: &[T], image: &FeatureImage, t: &mut Trace<T>) {
    let p = split(params);
    load_input(image, &mut t.input);
    conv_relu(&t.input, 1, IN_W, IN_H, p.conv1_w, p.conv1_b, &mut t.a1);
    max_pool(&t.a1, C1_W, C1_H, &mut t.p1, &mut t.p1_arg);
    conv_relu(&t.p1, FILTERS, P1_W, P1_H, p.conv2_w, p.conv2_b, &mut t.a2);
    max_pool(&t.a2, C2_W, C2_H, &mut t.p2, &mut t.p2_arg);
    for (o, h) in t.hidden.iter_mut().enumerate() {
        let v = p.dense_b[o] + dot(&p.dense_w[o * FLAT..(o + 1) * FLAT], &t.p2);
        *h = if v > T::ZERO { v } else { T::ZERO };
    }
    let mut logits = [T::ZERO; CLASSES];
    for (o, l) in logits.iter_mut().enumerate() {
        *l = p.out_b[o] + dot(&p.out_w[o * HIDDEN..(o + 1) * HIDDEN], &t.hidden);
    }
    let max = if logits[0] > logits[1] { logits[0] } else { logits[1] };
    let e = [(logits[0] - max).exp(), (logits[1] - max).exp()];
    let z = e[0] + e[1];
    t.probs = [e[0] / z, e[1] / z];
}

/// Scratch buffers for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct BackScratch<T> {
    d_hidden: Vec<T>,
    d_p2: Vec<T>,
    d_a2: Vec<T>,
    d_p1: Vec<T>,
    d_a1: Vec<T>,
}

impl<T: Real> Default for BackScratch<T> {
    fn default() -> Self {
        Self {
            d_hidden: vec![T::ZERO; HIDDEN],
            d_p2: vec![T::ZERO; FLAT],
            d_a2: vec![T::ZERO; FILTERS * C2_W * C2_H],
            d_p1: vec![T::ZERO; FILTERS * P1_W * P1_H],
            d_a1: vec![T::ZERO; FILTERS * C1_W * C1_H],
        }
    }
}

/// Accumulate `scale * dLoss/dParams` for one traced sample into `grad`.
pub(crate) fn backward<T: Real>(
    params: &[T],
    t: &Trace<T>,
    label: usize,
    scale: T,
    grad: &mut [T],
    s: &mut BackScratch<T>,
) {
    let p = split(params);
    let g = split_mut(grad);

    let mut d_logits = [t.probs[0], t.probs[1]];
    d_logits[label] = d_logits[label] - T::ONE;
    for d in d_logits.iter_mut() {
        *d *= scale;
    }

    s.d_hidden.fill(T::ZERO);
    for o in 0..CLASSES {
        g.out_b[o] += d_logits[o];
        axpy(d_logits[o], &t.hidden, &mut g.out_w[o * HIDDEN..(o + 1) * HIDDEN]);
        axpy(d_logits[o], &p.out_w[o * HIDDEN..(o + 1) * HIDDEN], &mut s.d_hidden);
    }
    for (d, &h) in s.d_hidden.iter_mut().zip(&t.hidden) {
        if !(h > T::ZERO) {
            *d = T::ZERO;
        }
    }

    s.d_p2.fill(T::ZERO);
    for o in 0..HIDDEN {
        let dh = s.d_hidden[o];
        if dh == T::ZERO {
            continue;
        }
        g.dense_b[o] += dh;
        axpy(dh, &t.p2, &mut g.dense_w[o * FLAT..(o + 1) * FLAT]);
        axpy(dh, &p.dense_w[o * FLAT..(o + 1) * FLAT], &mut s.d_p2);
    }

    // Unpool to the argmax positions, gated by relu.
    s.d_a2.fill(T::ZERO);
    for (d, &idx) in s.d_p2.iter().zip(&t.p2_arg) {
        if t.a2[idx as usize] > T::ZERO {
            s.d_a2[idx as usize] += *d;
        }
    }

    s.d_p1.fill(T::ZERO);
    conv_backward(
        &t.p1,
        FILTERS,
        P1_W,
        P1_H,
        p.conv2_w,
        &s.d_a2,
        g.conv2_w,
        g.conv2_b,
        Some(&mut s.d_p1),
    );

    s.d_a1.fill(T::ZERO);
    for (d, &idx) in s.d_p1.iter().zip(&t.p1_arg) {
        if t.a1[idx as usize] > T::ZERO {
            s.d_a1[idx as usize] += *d;
        }
    }
    conv_backward(&t.input, 1, IN_W, IN_H, p.conv1_w, &s.d_a1, g.conv1_w, g.conv1_b, None);
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    input: &[T],
    in_c: usize,
    in_w: usize,
    in_h: usize,
    weights: &[T],
    d_out: &[T],
    d_weights: &mut [T],
    d_bias: &mut [T],
    mut d_input: Option<&mut [T]>,
) {
    let (out_w, out_h) = (in_w - KERNEL + 1, in_h - KERNEL + 1);
    for (f, dof) in d_out.chunks_exact(out_w * out_h).enumerate() {
        d_bias[f] += dof.iter().fold(T::ZERO, |a, &b| a + b);
        for c in 0..in_c {
            let plane = c * in_w * in_h;
            for kx in 0..KERNEL {
                for ky in 0..KERNEL {
                    let wi = ((f * in_c + c) * KERNEL + ky) * KERNEL + kx;
                    let mut acc = T::ZERO;
                    for (x, dox) in dof.chunks_exact(out_h).enumerate() {
                        let start = plane + (x + kx) * in_h + ky;
                        acc += dot(dox, &input[start..start + out_h]);
                        if let Some(di) = d_input.as_deref_mut() {
                            axpy(weights[wi], dox, &mut di[start..start + out_h]);
                        }
                    }
                    d_weights[wi] += acc;
                }
            }
        }
    }
}

/// Negative log-likelihood of `label`, with probabilities clamped at 1e-12.
pub fn cross_entropy(probs: [f64; CLASSES], label: usize) -> f64 {
    -probs[label].max(1e-12).ln()
}
