//! Finite-difference checks of every layer and of the joint loss.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm2d, batchnorm2d_backward, bilinear_resize, bilinear_resize_backward, conv2d, conv2d_backward,
    conv_transpose2d, conv_transpose2d_backward, linear, linear_backward, relu, relu_backward, BatchNormState, Mode,
};
use crate::model::{backward, forward_traced, Architecture, JdfdParams};
use crate::objective::{joint_loss, LossWeights};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

use super::{GradCheck, LossAndGrads};

/// Pass threshold on the maximum relative error.
pub const SUITE_THRESHOLD: f64 = 1e-4;

pub const SUITE_LAYERS: [&str; 7] =
    ["conv2d", "conv_transpose2d", "batchnorm2d", "relu", "linear", "bilinear_resize", "joint_loss"];

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < SUITE_THRESHOLD
    }
}

fn random(shape: Shape, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.normal(0.0, 1.0))
}

fn vec_tensor(v: Vec<f64>) -> Tensor {
    let n = v.len();
    Tensor::from_vec(Shape::new(1, n, 1, 1), v).expect("length matches")
}

/// `loss = <out, probe>`; its gradient with respect to `out` is `probe`.
fn probe_loss(out: &Tensor, probe: &Tensor) -> f64 {
    out.dot(probe)
}

/// Scale the first analytic gradient slightly when this layer is the one
/// selected for corruption.
fn corrupt(mut grads: Vec<Tensor>, on: bool) -> Vec<Tensor> {
    if on {
        let g = &mut grads[0];
        *g = g.map(|v| v * 1.01 + 1e-3);
    }
    grads
}

fn check_conv(rng: &mut Rng, fault: bool) -> Result<(f64, usize)> {
    let x = random(Shape::new(2, 3, 8, 8), rng);
    let w = random(Shape::new(4, 3, 3, 3), rng);
    let b = random(Shape::new(1, 4, 1, 1), rng);
    let probe = random(Shape::new(2, 4, 8, 8), rng);
    let mut f = |p: &[Tensor]| -> Result<LossAndGrads> {
        let out = conv2d(&p[0], &p[1], Some(p[2].data()), 1, 1)?;
        let g = conv2d_backward(&p[0], &p[1], 1, 1, &probe)?;
        let mut grads = corrupt(vec![g.weight, g.input, vec_tensor(g.bias)], fault);
        grads.swap(0, 1);
        Ok((probe_loss(&out, &probe), grads))
    };
    let r = GradCheck::new(1e-5).run(&[x, w, b], &mut f)?;
    Ok((r.max_rel_error, r.checked))
}

fn check_deconv(rng: &mut Rng, fault: bool) -> Result<(f64, usize)> {
    let x = random(Shape::new(2, 3, 4, 4), rng);
    let w = random(Shape::new(3, 2, 3, 3), rng);
    let b = random(Shape::new(1, 2, 1, 1), rng);
    let probe = random(Shape::new(2, 2, 7, 7), rng);
    let mut f = |p: &[Tensor]| -> Result<LossAndGrads> {
        let out = conv_transpose2d(&p[0], &p[1], Some(p[2].data()), 2, 1)?;
        let g = conv_transpose2d_backward(&p[0], &p[1], 2, 1, &probe)?;
        let mut grads = corrupt(vec![g.weight, g.input, vec_tensor(g.bias)], fault);
        grads.swap(0, 1);
        Ok((probe_loss(&out, &probe), grads))
    };
    let r = GradCheck::new(1e-5).run(&[x, w, b], &mut f)?;
    Ok((r.max_rel_error, r.checked))
}

fn check_batchnorm(rng: &mut Rng, fault: bool) -> Result<(f64, usize)> {
    let x = random(Shape::new(4, 2, 5, 5), rng);
    let gamma = random(Shape::new(1, 2, 1, 1), rng);
    let beta = random(Shape::new(1, 2, 1, 1), rng);
    let probe = random(Shape::new(4, 2, 5, 5), rng);
    let mut f = |p: &[Tensor]| -> Result<LossAndGrads> {
        let mut st = BatchNormState::new(2);
        st.gamma = p[1].data().to_vec();
        st.beta = p[2].data().to_vec();
        let (out, cache) = batchnorm2d(&p[0], &st, Mode::Train)?;
        let g = batchnorm2d_backward(&cache, &st, &probe)?;
        Ok((probe_loss(&out, &probe), corrupt(vec![g.input, vec_tensor(g.gamma), vec_tensor(g.beta)], fault)))
    };
    let r = GradCheck::new(1e-3).fourth_order().run(&[x, gamma, beta], &mut f)?;
    Ok((r.max_rel_error, r.checked))
}

fn check_relu(rng: &mut Rng, fault: bool) -> Result<(f64, usize)> {
    // Keep every element at least 0.1 from the kink.
    let x = Tensor::from_fn(Shape::new(2, 3, 4, 4), |_, _, _, _| {
        let v = rng.normal(0.0, 1.0);
        v.signum() * (v.abs() + 0.1)
    });
    let probe = random(x.shape(), rng);
    let mut f = |p: &[Tensor]| -> Result<LossAndGrads> {
        let out = relu(&p[0]);
        let g = relu_backward(&p[0], &probe)?;
        Ok((probe_loss(&out, &probe), corrupt(vec![g], fault)))
    };
    let r = GradCheck::new(1e-5).run(&[x], &mut f)?;
    Ok((r.max_rel_error, r.checked))
}

fn check_linear(rng: &mut Rng, fault: bool) -> Result<(f64, usize)> {
    let x = random(Shape::flat(4, 10), rng);
    let w = random(Shape::flat(3, 10), rng);
    let b = random(Shape::new(1, 3, 1, 1), rng);
    let probe = random(Shape::flat(4, 3), rng);
    let mut f = |p: &[Tensor]| -> Result<LossAndGrads> {
        let out = linear(&p[0], &p[1], p[2].data())?;
        let g = linear_backward(&p[0], &p[1], &probe)?;
        let mut grads = corrupt(vec![g.weight, g.input, vec_tensor(g.bias)], fault);
        grads.swap(0, 1);
        Ok((probe_loss(&out, &probe), grads))
    };
    let r = GradCheck::new(1e-5).run(&[x, w, b], &mut f)?;
    Ok((r.max_rel_error, r.checked))
}

fn check_resize(rng: &mut Rng, fault: bool) -> Result<(f64, usize)> {
    let x = random(Shape::new(1, 2, 3, 5), rng);
    let probe = random(Shape::new(1, 2, 7, 4), rng);
    let mut f = |p: &[Tensor]| -> Result<LossAndGrads> {
        let out = bilinear_resize(&p[0], 7, 4)?;
        let g = bilinear_resize_backward(&probe, 3, 5)?;
        Ok((probe_loss(&out, &probe), corrupt(vec![g], fault)))
    };
    let r = GradCheck::new(1e-5).run(&[x], &mut f)?;
    Ok((r.max_rel_error, r.checked))
}

/// Learnable parameters as tensors, in slot order.
fn learnable(params: &JdfdParams) -> (Vec<String>, Vec<Tensor>) {
    params
        .slots()
        .into_iter()
        .filter(|(info, _)| info.learnable)
        .map(|(info, data)| (info.name, vec_tensor(data.to_vec())))
        .unzip()
}

fn assign(params: &mut JdfdParams, values: &[Tensor]) {
    let mut it = values.iter();
    for (info, data) in params.slots_mut() {
        if info.learnable {
            data.copy_from_slice(it.next().expect("one tensor per learnable slot").data());
        }
    }
}

/// Joint loss of the full model on a 4-sample 16x16 batch, train mode.
fn check_joint(rng: &mut Rng, fault: bool) -> Result<(f64, usize)> {
    let arch = Architecture::new(16, 16, 8)?;
    let mut params = JdfdParams::init(arch, true, rng);
    let x = Tensor::from_fn(Shape::new(4, 3, 16, 16), |_, _, _, _| rng.next_f64());
    let labels = [Some(Label::Real), Some(Label::Fake), Some(Label::Fake), Some(Label::Real)];
    let weights = LossWeights::default();
    let (names, values) = learnable(&params);
    let mut f = |p: &[Tensor]| -> Result<(f64, Vec<Tensor>, u64)> {
        assign(&mut params, p);
        let pass = forward_traced(&x, &params, Mode::Train)?;
        let (report, lg) = joint_loss(&x, &pass.output, &labels, weights)?;
        let g = backward(&params, &pass, lg.logits.as_ref(), lg.reconstruction.as_ref())?;
        let grads = names
            .iter()
            .map(|n| g.get(n).map(|v| vec_tensor(v.to_vec())).ok_or_else(|| Error::MissingGradient(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok((report.l_total, corrupt(grads, fault), pass.activation_pattern()))
    };
    let r = GradCheck::new(1e-4).fourth_order().sampled(16, 7).run_piecewise(&values, &mut f)?;
    Ok((r.max_rel_error, r.checked))
}

/// Run every check. `fault` names a layer whose analytic gradient is
/// deliberately perturbed, as a negative control.
pub fn run_suite(seed: u64, fault: Option<&str>) -> Result<Vec<LayerCheck>> {
    if let Some(name) = fault {
        if !SUITE_LAYERS.contains(&name) {
            return Err(Error::invalid(format!("unknown layer `{name}`; expected one of {SUITE_LAYERS:?}")));
        }
    }
    type Check = fn(&mut Rng, bool) -> Result<(f64, usize)>;
    let checks: [Check; 7] =
        [check_conv, check_deconv, check_batchnorm, check_relu, check_linear, check_resize, check_joint];
    SUITE_LAYERS
        .iter()
        .zip(checks)
        .enumerate()
        .map(|(i, (&layer, check))| {
            let (max_rel_error, checked) = check(&mut Rng::derive(seed, i as u64), fault == Some(layer))?;
            Ok(LayerCheck { layer, max_rel_error, checked })
        })
        .collect()
}
