//! Bilinear resampling with half-pixel centers:
//! `src = (dst + 0.5) * in / out - 0.5`, clamped to `[0, in - 1]`.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Source taps for one output coordinate: lower index, upper index, weight
/// of the upper tap.
#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            Tap { lo, hi: (lo + 1).min(input - 1), frac: src - lo as f64 }
        })
        .collect()
}

pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = input.shape();
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!("bilinear_resize: target {out_h}x{out_w} must be at least 1x1")));
    }
    if s.h == 0 || s.w == 0 {
        return Err(Error::shape(format!("bilinear_resize: empty input plane {s}")));
    }
    if (s.h, s.w) == (out_h, out_w) {
        return Ok(input.clone());
    }
    let ty = taps(s.h, out_h);
    let tx = taps(s.w, out_w);
    let out_shape = Shape::new(s.n, s.c, out_h, out_w);
    let mut out = Tensor::zeros(out_shape);
    let (ip, op) = (s.plane(), out_h * out_w);
    for (src, dst) in input.data().chunks(ip).zip(out.data_mut().chunks_mut(op)) {
        for (oy, y) in ty.iter().enumerate() {
            for (ox, x) in tx.iter().enumerate() {
                let a = src[y.lo * s.w + x.lo];
                let b = src[y.lo * s.w + x.hi];
                let c = src[y.hi * s.w + x.lo];
                let d = src[y.hi * s.w + x.hi];
                // Lerp form: exact on constant neighborhoods.
                let top = a + x.frac * (b - a);
                let bottom = c + x.frac * (d - c);
                dst[oy * out_w + ox] = top + y.frac * (bottom - top);
            }
        }
    }
    Ok(out)
}

/// Scatter the output gradient back through the four blend weights.
pub fn bilinear_resize_backward(grad_out: &Tensor, in_h: usize, in_w: usize) -> Result<Tensor> {
    let s = grad_out.shape();
    if in_h == 0 || in_w == 0 {
        return Err(Error::invalid("bilinear_resize_backward: empty input plane"));
    }
    if (s.h, s.w) == (in_h, in_w) {
        return Ok(grad_out.clone());
    }
    let ty = taps(in_h, s.h);
    let tx = taps(in_w, s.w);
    let mut gin = Tensor::zeros(Shape::new(s.n, s.c, in_h, in_w));
    let (ip, op) = (in_h * in_w, s.plane());
    for (g, dst) in grad_out.data().chunks(op).zip(gin.data_mut().chunks_mut(ip)) {
        for (oy, y) in ty.iter().enumerate() {
            for (ox, x) in tx.iter().enumerate() {
                let go = g[oy * s.w + ox];
                dst[y.lo * in_w + x.lo] += (1.0 - y.frac) * (1.0 - x.frac) * go;
                dst[y.lo * in_w + x.hi] += (1.0 - y.frac) * x.frac * go;
                dst[y.hi * in_w + x.lo] += y.frac * (1.0 - x.frac) * go;
                dst[y.hi * in_w + x.hi] += y.frac * x.frac * go;
            }
        }
    }
    Ok(gin)
}
