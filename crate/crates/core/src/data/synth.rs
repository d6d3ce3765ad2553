//! Procedural face-like images and spliced forgeries.
//!
//! A pristine image is a shared luminance field of Gaussian blobs plus a
//! per-image additive tint per channel and two noise layers (smooth and
//! per-pixel). A forgery pastes the central ellipse of a second pristine
//! image onto the first through a feathered alpha mask, with a chroma shift
//! and a blur applied to the pasted content.

use crate::layers::bilinear_resize;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

use super::ppm::quantize;
use super::{FamilySpec, Label, Sample};

const TINT_RANGE: f64 = 0.12;
const SMOOTH_NOISE: f64 = 0.05;
const CHANNEL_NOISE: f64 = 0.015;
const PIXEL_NOISE: f64 = 0.02;
const NOISE_GRID: usize = 8;

fn smooth_noise(rng: &mut Rng, h: usize, w: usize, std: f64) -> Tensor {
    let grid = Tensor::from_fn(Shape::new(1, 1, NOISE_GRID, NOISE_GRID), |_, _, _, _| rng.normal(0.0, std));
    bilinear_resize(&grid, h, w).expect("noise grid resize")
}

/// Pristine image determined entirely by `texture_seed`.
pub fn real_from_texture(texture_seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = Rng::new(texture_seed);
    let (hf, wf) = (h as f64, w as f64);
    let size = hf.min(wf);

    // Face: one broad blob near the center, then 4-9 smaller features.
    let blobs = 5 + rng.below(6) as usize;
    let mut params = Vec::with_capacity(blobs);
    params.push((
        rng.uniform(0.4, 0.6) * wf,
        rng.uniform(0.4, 0.6) * hf,
        rng.uniform(0.25, 0.4) * size,
        rng.uniform(0.8, 1.2),
    ));
    for _ in 1..blobs {
        params.push((
            rng.uniform(0.1, 0.9) * wf,
            rng.uniform(0.1, 0.9) * hf,
            rng.uniform(0.05, 0.2) * size,
            rng.uniform(0.2, 0.7),
        ));
    }
    let tint: Vec<f64> = (0..3).map(|_| rng.uniform(-TINT_RANGE, TINT_RANGE)).collect();
    let shared = smooth_noise(&mut rng, h, w, SMOOTH_NOISE);
    let per_channel: Vec<Tensor> = (0..3).map(|_| smooth_noise(&mut rng, h, w, CHANNEL_NOISE)).collect();

    let mut luminance = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            luminance[y * w + x] = params
                .iter()
                .map(|&(cx, cy, s, a)| a * (-((px - cx).powi(2) + (py - cy).powi(2)) / (2.0 * s * s)).exp())
                .sum::<f64>()
                + shared.data()[y * w + x];
        }
    }
    let mut img = Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        luminance[y * w + x] + tint[c] + per_channel[c].data()[y * w + x]
    });
    for v in img.data_mut() {
        *v += rng.normal(0.0, PIXEL_NOISE);
    }
    let (lo, hi) = img.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-12);
    for v in img.data_mut() {
        *v = quantize((*v - lo) / span);
    }
    img
}

fn texture_seed(spec: &FamilySpec, rng: &mut Rng) -> u64 {
    let r = &spec.texture_seeds;
    r.start + rng.below(r.end - r.start)
}

/// A pristine sample from the family's texture seed space.
pub fn generate_real(spec: &FamilySpec, rng: &mut Rng, h: usize, w: usize) -> Sample {
    let seed = texture_seed(spec, rng);
    Sample { image: real_from_texture(seed, h, w), label: Some(Label::Real), family: spec.name.clone(), id: 0 }
}

/// Alpha mask over the central ellipse, ramping from 0 on the boundary to 1
/// at `blend_softness` pixels inside it. Zero everywhere outside.
fn ellipse_alpha(spec: &FamilySpec, h: usize, w: usize) -> Vec<f64> {
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (a, b) = (spec.region_scale * cx, spec.region_scale * cy);
    let inner = a.min(b);
    let mut alpha = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f64 + 0.5 - cx) / a;
            let dy = (y as f64 + 0.5 - cy) / b;
            let r = (dx * dx + dy * dy).sqrt();
            if r < 1.0 {
                alpha[y * w + x] = ((1.0 - r) * inner / spec.blend_softness).min(1.0);
            }
        }
    }
    alpha
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let z: f64 = k.iter().sum();
    k.into_iter().map(|v| v / z).collect()
}

/// Separable Gaussian blur with clamped borders.
fn blur(img: &Tensor, sigma: f64) -> Tensor {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let s = img.shape();
    let (h, w) = (s.h as isize, s.w as isize);
    let tap = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
    let horizontal = Tensor::from_fn(s, |n, c, y, x| {
        k.iter().enumerate().map(|(i, kv)| kv * img.at(n, c, y, tap(x as isize + i as isize - r, w))).sum()
    });
    Tensor::from_fn(s, |n, c, y, x| {
        k.iter().enumerate().map(|(i, kv)| kv * horizontal.at(n, c, tap(y as isize + i as isize - r, h), x)).sum()
    })
}

/// Random chroma direction (orthogonal to gray) scaled to `magnitude`.
fn chroma_shift(rng: &mut Rng, magnitude: f64) -> [f64; 3] {
    let theta = rng.uniform(0.0, std::f64::consts::TAU);
    let e1 = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let e2 = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
    let (c, s) = (theta.cos(), theta.sin());
    [0, 1, 2].map(|i| magnitude * (c * e1[i] + s * e2[i]))
}

/// Splice the central region of `source` into `target`. Pixels where the
/// mask is zero are returned bit-identical to `target`.
pub fn manipulate(target: &Tensor, source: &Tensor, spec: &FamilySpec, rng: &mut Rng) -> Tensor {
    let s = target.shape();
    assert_eq!(s, source.shape(), "manipulate: source and target shapes differ");
    let alpha = ellipse_alpha(spec, s.h, s.w);
    let shift = chroma_shift(rng, spec.color_shift);
    let pasted = blur(source, spec.smooth_sigma);
    let plane = s.plane();
    let mut out = target.clone();
    for c in 0..s.c {
        let base = c * plane;
        for (i, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let t = target.data()[base + i];
            let p = pasted.data()[base + i] + shift[c % 3];
            out.data_mut()[base + i] = quantize((t + a * (p - t)).clamp(0.0, 1.0));
        }
    }
    out
}

/// A spliced forgery: target and source are two pristine draws.
pub fn generate_fake(spec: &FamilySpec, rng: &mut Rng, h: usize, w: usize) -> Sample {
    let target = real_from_texture(texture_seed(spec, rng), h, w);
    let source = real_from_texture(texture_seed(spec, rng), h, w);
    let image = manipulate(&target, &source, spec, rng);
    Sample { image, label: Some(Label::Fake), family: spec.name.clone(), id: 0 }
}
