//! 2D cross-correlation and its transpose, both lowered to GEMM through
//! im2col / col2im on one sample at a time.

use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::par;
use crate::tensor::{Shape, Tensor};

/// Sliding-window geometry over one `(c, h, w)` image.
#[derive(Clone, Copy, Debug)]
struct Window {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Visit every (column-matrix index, image index) pair that lands inside
    /// the image; padded taps are skipped.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let p = self.cols();
        for ci in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let img_row = (ci * self.h + iy as usize) * self.w;
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(row * p + oy * self.ow + ox, img_row + ix as usize);
                        }
                    }
                }
            }
        }
    }
}

fn im2col(img: &[f64], win: &Window) -> Vec<f64> {
    let mut cols = vec![0.0; win.rows() * win.cols()];
    win.for_each_tap(|ci, ii| cols[ci] = img[ii]);
    cols
}

fn col2im(cols: &[f64], win: &Window, img: &mut [f64]) {
    win.for_each_tap(|ci, ii| img[ii] += cols[ci]);
}

/// Gradients returned by the convolution backward passes.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

fn check_stride(op: &str, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::invalid(format!("{op}: stride must be at least 1")));
    }
    Ok(())
}

fn check_bias(op: &str, bias: Option<&[f64]>, out_channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != out_channels => Err(Error::shape(format!(
            "{op}: bias has {} entries but there are {out_channels} output channels (dimension O)",
            b.len()
        ))),
        _ => Ok(()),
    }
}

fn conv_window(op: &str, input: Shape, weight: Shape, stride: usize, pad: usize) -> Result<Window> {
    check_stride(op, stride)?;
    if weight.h != weight.w {
        return Err(Error::shape(format!("{op}: kernel must be square, got {}x{}", weight.h, weight.w)));
    }
    if input.c != weight.c {
        return Err(Error::shape(format!(
            "{op}: input has {} channels but weight expects {} (dimension C)",
            input.c, weight.c
        )));
    }
    let k = weight.h;
    if k > input.h + 2 * pad {
        return Err(Error::shape(format!(
            "{op}: kernel {k} exceeds padded height {} (dimension H)",
            input.h + 2 * pad
        )));
    }
    if k > input.w + 2 * pad {
        return Err(Error::shape(format!(
            "{op}: kernel {k} exceeds padded width {} (dimension W)",
            input.w + 2 * pad
        )));
    }
    Ok(Window {
        c: input.c,
        h: input.h,
        w: input.w,
        k,
        stride,
        pad,
        oh: (input.h + 2 * pad - k) / stride + 1,
        ow: (input.w + 2 * pad - k) / stride + 1,
    })
}

fn add_bias(out: &mut [f64], bias: Option<&[f64]>, plane: usize) {
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_mut(plane).zip(b) {
            row.iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn bias_grad(grad_out: &[f64], channels: usize, plane: usize) -> Vec<f64> {
    (0..channels).map(|o| grad_out[o * plane..(o + 1) * plane].iter().sum()).collect()
}

/// Sum per-sample partial results in sample order.
fn reduce_in_order(parts: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for part in parts {
        acc.iter_mut().zip(part).for_each(|(a, p)| *a += p);
    }
    acc
}

/// Cross-correlation of `input (N, C, H, W)` with `weight (O, C, K, K)`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&[f64]>, stride: usize, pad: usize) -> Result<Tensor> {
    let ws = weight.shape();
    let win = conv_window("conv2d", input.shape(), ws, stride, pad)?;
    check_bias("conv2d", bias, ws.n)?;
    let out_shape = Shape::new(input.shape().n, ws.n, win.oh, win.ow);
    let mut out = Tensor::zeros(out_shape);
    if out_shape.is_empty() {
        return Ok(out);
    }
    let plane = win.cols();
    par::for_each_chunk_mut(out.data_mut(), out_shape.sample_len(), |n, dst| {
        let cols = im2col(input.sample(n), &win);
        gemm(ws.n, win.rows(), plane, weight.data(), false, &cols, false, 0.0, dst);
        add_bias(dst, bias, plane);
    });
    Ok(out)
}

/// Exact gradients of [`conv2d`] given the upstream gradient.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let ws = weight.shape();
    let win = conv_window("conv2d_backward", input.shape(), ws, stride, pad)?;
    let expect = Shape::new(input.shape().n, ws.n, win.oh, win.ow);
    if grad_out.shape() != expect {
        return Err(Error::shape(format!(
            "conv2d_backward: output gradient is {} but forward output was {expect}",
            grad_out.shape()
        )));
    }
    let plane = win.cols();
    let parts = par::map_indexed(input.shape().n, |n| {
        let cols = im2col(input.sample(n), &win);
        let go = grad_out.sample(n);
        let mut gw = vec![0.0; ws.len()];
        gemm(ws.n, plane, win.rows(), go, false, &cols, true, 0.0, &mut gw);
        let mut gcols = vec![0.0; cols.len()];
        gemm(win.rows(), ws.n, plane, weight.data(), true, go, false, 0.0, &mut gcols);
        let mut gin = vec![0.0; input.shape().sample_len()];
        col2im(&gcols, &win, &mut gin);
        (gin, gw, bias_grad(go, ws.n, plane))
    });
    let mut gin = Vec::with_capacity(input.len());
    for (g, _, _) in &parts {
        gin.extend_from_slice(g);
    }
    let gw: Vec<Vec<f64>> = parts.iter().map(|p| p.1.clone()).collect();
    let gb: Vec<Vec<f64>> = parts.iter().map(|p| p.2.clone()).collect();
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), gin)?,
        weight: Tensor::from_vec(ws, reduce_in_order(&gw, ws.len()))?,
        bias: reduce_in_order(&gb, ws.n),
    })
}

fn transpose_window(op: &str, input: Shape, weight: Shape, stride: usize, pad: usize) -> Result<Window> {
    check_stride(op, stride)?;
    if weight.h != weight.w {
        return Err(Error::shape(format!("{op}: kernel must be square, got {}x{}", weight.h, weight.w)));
    }
    if input.c != weight.n {
        return Err(Error::shape(format!(
            "{op}: input has {} channels but weight expects {} (dimension C)",
            input.c, weight.n
        )));
    }
    let k = weight.h;
    let full_h = (input.h.max(1) - 1) * stride + k;
    let full_w = (input.w.max(1) - 1) * stride + k;
    if full_h < 2 * pad + 1 || full_w < 2 * pad + 1 {
        return Err(Error::shape(format!("{op}: padding {pad} leaves an empty output (dimension H/W)")));
    }
    // The output image is the one whose convolution windows land exactly on
    // the input grid.
    Ok(Window {
        c: weight.c,
        h: full_h - 2 * pad,
        w: full_w - 2 * pad,
        k,
        stride,
        pad,
        oh: input.h,
        ow: input.w,
    })
}

/// Transposed convolution of `input (N, C, H, W)` with `weight (C, O, K, K)`.
/// Output is `(N, O, (H-1)*stride - 2*pad + K, (W-1)*stride - 2*pad + K)`.
pub fn conv_transpose2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let ws = weight.shape();
    let win = transpose_window("conv_transpose2d", input.shape(), ws, stride, pad)?;
    check_bias("conv_transpose2d", bias, ws.c)?;
    let out_shape = Shape::new(input.shape().n, ws.c, win.h, win.w);
    let mut out = Tensor::zeros(out_shape);
    if out_shape.is_empty() {
        return Ok(out);
    }
    let in_plane = win.cols();
    par::for_each_chunk_mut(out.data_mut(), out_shape.sample_len(), |n, dst| {
        let mut cols = vec![0.0; win.rows() * in_plane];
        gemm(win.rows(), ws.n, in_plane, weight.data(), true, input.sample(n), false, 0.0, &mut cols);
        col2im(&cols, &win, dst);
        add_bias(dst, bias, win.h * win.w);
    });
    Ok(out)
}

/// Exact gradients of [`conv_transpose2d`].
pub fn conv_transpose2d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let ws = weight.shape();
    let win = transpose_window("conv_transpose2d_backward", input.shape(), ws, stride, pad)?;
    let expect = Shape::new(input.shape().n, ws.c, win.h, win.w);
    if grad_out.shape() != expect {
        return Err(Error::shape(format!(
            "conv_transpose2d_backward: output gradient is {} but forward output was {expect}",
            grad_out.shape()
        )));
    }
    let in_plane = win.cols();
    let parts = par::map_indexed(input.shape().n, |n| {
        let go = grad_out.sample(n);
        let gcols = im2col(go, &win);
        let mut gin = vec![0.0; input.shape().sample_len()];
        gemm(ws.n, win.rows(), in_plane, weight.data(), false, &gcols, false, 0.0, &mut gin);
        let mut gw = vec![0.0; ws.len()];
        gemm(ws.n, in_plane, win.rows(), input.sample(n), false, &gcols, true, 0.0, &mut gw);
        (gin, gw, bias_grad(go, ws.c, win.h * win.w))
    });
    let mut gin = Vec::with_capacity(input.len());
    for (g, _, _) in &parts {
        gin.extend_from_slice(g);
    }
    let gw: Vec<Vec<f64>> = parts.iter().map(|p| p.1.clone()).collect();
    let gb: Vec<Vec<f64>> = parts.iter().map(|p| p.2.clone()).collect();
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), gin)?,
        weight: Tensor::from_vec(ws, reduce_in_order(&gw, ws.len()))?,
        bias: reduce_in_order(&gb, ws.c),
    })
}
