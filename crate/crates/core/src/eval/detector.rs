//! A hand-set parameter vector that detects spliced regions without
//! training, used to validate the evaluation path end to end.
//!
//! The first encoder stage turns RGB into the positive and negative parts
//! of the R−G and G−B differences, every stage 2x2-average-pools them, and
//! the encoder output compares the pooled values in the central cells with
//! those in the outer ring. The classifier scores the absolute contrast.
//! Global tints cancel, while a region pasted with a different chroma does
//! not.

use crate::error::{Error, Result};
use crate::model::{Architecture, JdfdParams};

/// Logit gain applied to the summed absolute contrast.
const GAIN: f64 = 10.0;
/// Chroma channels: (+R−G), (G−R), (G−B), (B−G).
const CHROMA: [[f64; 3]; 4] = [[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 1.0, -1.0], [0.0, -1.0, 1.0]];

/// Taps of a 3x3 stride-2 pad-1 kernel covering the 2x2 block at `2i, 2j`.
const POOL_TAPS: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 1), (2, 2)];

pub fn chroma_contrast_detector(arch: Architecture) -> Result<JdfdParams> {
    let (gh, gw) = arch.grid();
    if gh < 4 || gw < 4 || arch.latent_dim < CHROMA.len() {
        return Err(Error::invalid(format!(
            "the constructed detector needs an encoder grid of at least 4x4 and latent_dim >= 4, got {gh}x{gw} and {}",
            arch.latent_dim
        )));
    }
    let mut p = JdfdParams::zeros(arch, true);
    for (b, block) in p.encoder.blocks.iter_mut().enumerate() {
        let s = block.weight.shape();
        let (out_c, in_c) = (s.n, s.c);
        for o in 0..CHROMA.len() {
            for &(ky, kx) in &POOL_TAPS {
                if b == 0 {
                    for (c, &coef) in CHROMA[o].iter().enumerate() {
                        let i = block.weight.index(o, c, ky, kx);
                        block.weight.data_mut()[i] = 0.25 * coef;
                    }
                } else {
                    let i = block.weight.index(o, o, ky, kx);
                    block.weight.data_mut()[i] = 0.25;
                }
            }
        }
        debug_assert!(in_c >= 3 && out_c >= CHROMA.len());
        let eps = block.bn.eps;
        block.bn.running_var.iter_mut().for_each(|v| *v = 1.0 - eps);
    }

    let center = |y: usize, x: usize| (gh / 4..gh - gh / 4).contains(&y) && (gw / 4..gw - gw / 4).contains(&x);
    let n_center = (0..gh).flat_map(|y| (0..gw).map(move |x| (y, x))).filter(|&(y, x)| center(y, x)).count();
    let n_ring = gh * gw - n_center;
    let fc = &mut p.encoder.fc;
    let inputs = fc.inputs();
    for k in 0..CHROMA.len() {
        for y in 0..gh {
            for x in 0..gw {
                let w = if center(y, x) { 1.0 / n_center as f64 } else { -1.0 / n_ring as f64 };
                fc.weight.data_mut()[k * inputs + (k * gh + y) * gw + x] = w;
            }
        }
    }

    let cls = &mut p.classifier;
    let hidden_in = cls.hidden.inputs();
    let hidden_out = cls.output.inputs();
    for k in 0..CHROMA.len() {
        cls.hidden.weight.data_mut()[2 * k * hidden_in + k] = 1.0;
        cls.hidden.weight.data_mut()[(2 * k + 1) * hidden_in + k] = -1.0;
        cls.output.weight.data_mut()[hidden_out + 2 * k] = GAIN;
        cls.output.weight.data_mut()[hidden_out + 2 * k + 1] = GAIN;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use crate::model::{encode, forward_traced};
    use crate::tensor::{Shape, Tensor};

    fn arch() -> Architecture {
        Architecture::new(64, 64, 8).unwrap()
    }

    #[test]
    fn uniform_tint_scores_at_chance() {
        let p = chroma_contrast_detector(arch()).unwrap();
        let x = Tensor::from_fn(Shape::new(1, 3, 64, 64), |_, c, _, _| [0.7, 0.4, 0.2][c]);
        let v = encode(&x, &p, Mode::Infer).unwrap();
        assert!(v.data().iter().all(|z| z.abs() < 1e-12));
        let out = forward_traced(&x, &p, Mode::Infer).unwrap().output;
        assert!((out.probabilities.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn central_chroma_patch_raises_score() {
        let p = chroma_contrast_detector(arch()).unwrap();
        let x = Tensor::from_fn(Shape::new(1, 3, 64, 64), |_, c, y, x| {
            let inside = (20..44).contains(&y) && (20..44).contains(&x);
            0.5 + if inside && c == 0 { 0.1 } else { 0.0 }
        });
        let out = forward_traced(&x, &p, Mode::Infer).unwrap().output;
        assert!(out.probabilities.data()[1] > 0.6);
    }

    #[test]
    fn small_grids_are_rejected() {
        assert!(chroma_contrast_detector(Architecture::new(32, 32, 8).unwrap()).is_err());
        assert!(chroma_contrast_detector(Architecture::new(64, 64, 3).unwrap()).is_err());
    }
}
