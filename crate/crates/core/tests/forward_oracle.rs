//! The model forward pass against a naive loop-by-loop re-implementation.

use jdfd::layers::{bilinear_resize, BatchNormState};
use jdfd::model::{classify, decode, encode, forward_traced, Architecture, JdfdParams};
use jdfd::{Mode, Rng, Shape, Tensor};

/// Plain NCHW array.
#[derive(Clone, Debug)]
struct Arr {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Arr {
    fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Arr { n, c, h, w, v: vec![0.0; n * c * h * w] }
    }
    fn of(t: &Tensor) -> Self {
        let s = t.shape();
        Arr { n: s.n, c: s.c, h: s.h, w: s.w, v: t.data().to_vec() }
    }
    fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.v[((n * self.c + c) * self.h + y) * self.w + x]
    }
    fn set(&mut self, n: usize, c: usize, y: usize, x: usize, val: f64) {
        let i = ((n * self.c + c) * self.h + y) * self.w + x;
        self.v[i] = val;
    }
}

fn conv(x: &Arr, wt: &Tensor, bias: Option<&[f64]>, stride: usize, pad: usize) -> Arr {
    let ws = wt.shape();
    let k = ws.h;
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let mut out = Arr::zeros(x.n, ws.n, oh, ow);
    for n in 0..x.n {
        for o in 0..ws.n {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[o]);
                    for c in 0..x.c {
                        for i in 0..k {
                            for j in 0..k {
                                let sy = (y * stride + i) as isize - pad as isize;
                                let sx = (xx * stride + j) as isize - pad as isize;
                                if sy >= 0 && sx >= 0 && (sy as usize) < x.h && (sx as usize) < x.w {
                                    acc += wt.at(o, c, i, j) * x.at(n, c, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    out.set(n, o, y, xx, acc);
                }
            }
        }
    }
    out
}

/// Transposed convolution as a scatter of every input pixel.
fn deconv(x: &Arr, wt: &Tensor, stride: usize) -> Arr {
    let ws = wt.shape();
    let k = ws.h;
    let mut out = Arr::zeros(x.n, ws.c, (x.h - 1) * stride + k, (x.w - 1) * stride + k);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    for o in 0..ws.c {
                        for i in 0..k {
                            for j in 0..k {
                                let (oy, ox) = (y * stride + i, xx * stride + j);
                                let cur = out.at(n, o, oy, ox);
                                out.set(n, o, oy, ox, cur + x.at(n, c, y, xx) * wt.at(c, o, i, j));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn batchnorm_relu(x: &Arr, bn: &BatchNormState, mode: Mode) -> Arr {
    let mut out = x.clone();
    let count = (x.n * x.h * x.w) as f64;
    for c in 0..x.c {
        let (mean, var) = match mode {
            Mode::Infer => (bn.running_mean[c], bn.running_var[c]),
            Mode::Train => {
                let mut s = 0.0;
                for n in 0..x.n {
                    for y in 0..x.h {
                        for xx in 0..x.w {
                            s += x.at(n, c, y, xx);
                        }
                    }
                }
                let m = s / count;
                let mut q = 0.0;
                for n in 0..x.n {
                    for y in 0..x.h {
                        for xx in 0..x.w {
                            q += (x.at(n, c, y, xx) - m).powi(2);
                        }
                    }
                }
                (m, q / count)
            }
        };
        for n in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let z = (x.at(n, c, y, xx) - mean) / (var + bn.eps).sqrt() * bn.gamma[c] + bn.beta[c];
                    out.set(n, c, y, xx, z.max(0.0));
                }
            }
        }
    }
    out
}

/// `W x + b` with `x` each sample's values in NCHW order.
fn dense(x: &Arr, wt: &Tensor, b: &[f64]) -> Vec<Vec<f64>> {
    let d = x.c * x.h * x.w;
    (0..x.n)
        .map(|n| {
            let row = &x.v[n * d..(n + 1) * d];
            (0..b.len()).map(|o| b[o] + (0..d).map(|i| wt.data()[o * d + i] * row[i]).sum::<f64>()).collect()
        })
        .collect()
}

fn rows_to_arr(rows: &[Vec<f64>], c: usize, h: usize, w: usize) -> Arr {
    Arr { n: rows.len(), c, h, w, v: rows.concat() }
}

fn oracle_encode(x: &Tensor, p: &JdfdParams, mode: Mode) -> Vec<Vec<f64>> {
    let mut h = Arr::of(x);
    for b in &p.encoder.blocks {
        h = batchnorm_relu(&conv(&h, &b.weight, None, 2, 1), &b.bn, mode);
    }
    dense(&h, &p.encoder.fc.weight, &p.encoder.fc.bias)
}

fn oracle_decode(z: &[Vec<f64>], p: &JdfdParams, mode: Mode) -> Arr {
    let d = p.decoder.as_ref().unwrap();
    let (gh, gw) = p.arch.grid();
    let zin = rows_to_arr(z, z[0].len(), 1, 1);
    let mut h = rows_to_arr(&dense(&zin, &d.fc.weight, &d.fc.bias), 128, gh, gw);
    for b in &d.blocks {
        h = batchnorm_relu(&deconv(&h, &b.weight, 2), &b.bn, mode);
    }
    conv(&h, &d.out_conv.weight, Some(&d.out_conv.bias), 1, 1)
}

fn oracle_classify(z: &[Vec<f64>], p: &JdfdParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let c = &p.classifier;
    let zin = rows_to_arr(z, z[0].len(), 1, 1);
    let hidden: Vec<Vec<f64>> =
        dense(&zin, &c.hidden.weight, &c.hidden.bias).into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
    let logits = dense(&rows_to_arr(&hidden, hidden[0].len(), 1, 1), &c.output.weight, &c.output.bias);
    let probs = logits
        .iter()
        .map(|l| {
            let e: Vec<f64> = l.iter().map(|v| v.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect();
    (logits, probs)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn randomized_params(arch: Architecture, seed: u64) -> JdfdParams {
    let mut rng = Rng::new(seed);
    let mut p = JdfdParams::init(arch, true, &mut rng);
    let mut blocks: Vec<&mut BatchNormState> = p.encoder.blocks.iter_mut().map(|b| &mut b.bn).collect();
    blocks.extend(p.decoder.as_mut().unwrap().blocks.iter_mut().map(|b| &mut b.bn));
    for bn in blocks {
        for c in 0..bn.channels() {
            bn.gamma[c] = rng.uniform(0.5, 1.5);
            bn.beta[c] = rng.uniform(-0.2, 0.2);
            bn.running_mean[c] = rng.uniform(-0.3, 0.3);
            bn.running_var[c] = rng.uniform(0.5, 2.0);
        }
    }
    for b in p.classifier.hidden.bias.iter_mut().chain(&mut p.encoder.fc.bias) {
        *b = rng.uniform(-0.1, 0.1);
    }
    p
}

#[test]
fn model_matches_naive_oracle_in_both_modes() {
    let arch = Architecture::new(32, 48, 6).unwrap();
    let p = randomized_params(arch, 42);
    let mut rng = Rng::new(9);
    let x = Tensor::from_fn(Shape::new(3, 3, 32, 48), |_, _, _, _| rng.next_f64());
    for mode in [Mode::Train, Mode::Infer] {
        let z = oracle_encode(&x, &p, mode);
        let v = encode(&x, &p, mode).unwrap();
        assert_eq!(v.shape(), Shape::new(3, 6, 1, 1));
        assert!(max_diff(v.data(), &z.concat()) < 1e-9, "{mode:?} latent");

        let recon = oracle_decode(&z, &p, mode);
        assert_eq!((recon.h, recon.w), (32, 48));
        let r = decode(&v, &p, mode).unwrap();
        assert!(max_diff(r.data(), &recon.v) < 1e-9, "{mode:?} reconstruction");

        let (logits, probs) = oracle_classify(&z, &p);
        let (l, pr) = classify(&v, &p).unwrap();
        assert!(max_diff(l.data(), &logits.concat()) < 1e-9);
        assert!(max_diff(pr.data(), &probs.concat()) < 1e-12);

        let pass = forward_traced(&x, &p, mode).unwrap();
        assert!(max_diff(pass.output.reconstruction.as_ref().unwrap().data(), &recon.v) < 1e-9);
        assert!(max_diff(pass.output.probabilities.data(), &probs.concat()) < 1e-12);
    }
}

#[test]
fn resize_matches_per_pixel_formula() {
    let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let y = bilinear_resize(&x, 4, 4).unwrap();
    let sample = |o: usize| ((o as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
    for oy in 0..4 {
        for ox in 0..4 {
            let (sy, sx) = (sample(oy), sample(ox));
            let expect = (1.0 - sy) * ((1.0 - sx) * 0.0 + sx * 1.0) + sy * ((1.0 - sx) * 2.0 + sx * 3.0);
            assert!((y.at(0, 0, oy, ox) - expect).abs() < 1e-15);
        }
    }
    assert_eq!(y.at(0, 0, 0, 0), 0.0);
    assert_eq!(y.at(0, 0, 3, 3), 3.0);
    assert!((y.at(0, 0, 1, 1) - 0.75).abs() < 1e-15);
}

#[test]
fn baseline_model_has_no_reconstruction() {
    let arch = Architecture::new(16, 16, 4).unwrap();
    let p = JdfdParams::init(arch, false, &mut Rng::new(1));
    let x = Tensor::full(Shape::new(2, 3, 16, 16), 0.5);
    let pass = forward_traced(&x, &p, Mode::Infer).unwrap();
    assert!(pass.output.reconstruction.is_none());
    assert!(decode(&pass.output.latent, &p, Mode::Infer).is_err());
}
