//! Plain SGD with one learning rate for the autoencoder (encoder + decoder)
//! and another for the classifier, decayed on a fixed epoch schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Gradients, Group, JdfdParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    /// Encoder and decoder learning rate.
    pub lr_cae: f64,
    /// Classifier learning rate.
    pub lr_cls: f64,
    /// Epochs between decays.
    pub step_size: usize,
    /// Multiplier applied at each step boundary.
    pub decay: f64,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { lr_cae: 0.005, lr_cls: 0.0004, step_size: 5, decay: 0.8, momentum: 0.0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_cae > 0.0 && self.lr_cls > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.step_size == 0 {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid("decay must lie in (0, 1]"));
        }
        if !(self.momentum >= 0.0) {
            return Err(Error::invalid("momentum must be non-negative"));
        }
        Ok(())
    }

    /// `base * decay^floor(epoch / step_size)`.
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        base * self.decay.powi((epoch / self.step_size) as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub config: SgdConfig,
    pub epoch: usize,
    pub lr_cae: f64,
    pub lr_cls: f64,
    velocity: BTreeMap<String, Vec<f64>>,
}

impl SgdState {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(SgdState { config, epoch: 0, lr_cae: config.lr_cae, lr_cls: config.lr_cls, velocity: BTreeMap::new() })
    }

    pub fn lr_for(&self, group: Group) -> f64 {
        match group {
            Group::Encoder | Group::Decoder => self.lr_cae,
            Group::Classifier => self.lr_cls,
        }
    }
}

/// One update `p <- p - lr(group) * g`, or with momentum `v <- mu v + g;
/// p <- p - lr v`. Every learnable parameter must have a gradient.
pub fn sgd_step(params: &mut JdfdParams, grads: &Gradients, state: &mut SgdState) -> Result<()> {
    // Validate first so a failure leaves the parameters untouched.
    for (info, data) in params.slots() {
        if !info.learnable {
            continue;
        }
        match grads.get(&info.name) {
            None => return Err(Error::MissingGradient(info.name)),
            Some(g) if g.len() != data.len() => {
                return Err(Error::shape(format!(
                    "gradient for `{}` has {} values, parameter has {}",
                    info.name,
                    g.len(),
                    data.len()
                )))
            }
            _ => {}
        }
    }
    let mu = state.config.momentum;
    let (lr_cae, lr_cls) = (state.lr_cae, state.lr_cls);
    for (info, data) in params.slots_mut() {
        if !info.learnable {
            continue;
        }
        let lr = match info.group {
            Group::Encoder | Group::Decoder => lr_cae,
            Group::Classifier => lr_cls,
        };
        let g = grads.get(&info.name).expect("checked above");
        if mu > 0.0 {
            let v = state.velocity.entry(info.name).or_insert_with(|| vec![0.0; g.len()]);
            for ((p, vi), gi) in data.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = mu * *vi + gi;
                *p -= lr * *vi;
            }
        } else {
            for (p, gi) in data.iter_mut().zip(g) {
                *p -= lr * gi;
            }
        }
    }
    Ok(())
}

/// Advance one epoch and recompute both learning rates.
pub fn scheduler_step(state: &mut SgdState) {
    state.epoch += 1;
    state.lr_cae = state.config.lr_at(state.config.lr_cae, state.epoch);
    state.lr_cls = state.config.lr_at(state.config.lr_cls, state.epoch);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::rng::Rng;

    fn params() -> JdfdParams {
        JdfdParams::init(Architecture::new(16, 16, 4).unwrap(), true, &mut Rng::new(1))
    }

    #[test]
    fn defaults() {
        let c = SgdConfig::default();
        assert_eq!((c.lr_cae, c.lr_cls, c.step_size, c.decay, c.momentum), (0.005, 0.0004, 5, 0.8, 0.0));
    }

    #[test]
    fn schedule_boundaries() {
        let mut s = SgdState::new(SgdConfig::default()).unwrap();
        for _ in 0..4 {
            scheduler_step(&mut s);
        }
        assert_eq!(s.lr_cls, 0.0004);
        assert_eq!(s.lr_cae, 0.005);
        scheduler_step(&mut s);
        assert!((s.lr_cae - 0.004).abs() < 1e-18);
        for _ in 0..5 {
            scheduler_step(&mut s);
        }
        assert_eq!(s.epoch, 10);
        assert!((s.lr_cae - 0.0032).abs() < 1e-18);
        assert_eq!(s.lr_cae, 0.005 * 0.8f64.powi(2));
    }

    #[test]
    fn scalar_update() {
        let mut p = params();
        let mut g = Gradients::zeros_like(&p);
        p.encoder.fc.bias[0] = 1.0;
        g.get_mut("encoder.fc.bias").unwrap()[0] = 2.0;
        let mut s = SgdState::new(SgdConfig::default()).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        assert!((p.encoder.fc.bias[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = params();
        let before = p.clone();
        let g = Gradients::zeros_like(&p);
        let mut s = SgdState::new(SgdConfig::default()).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut p = params();
        let mut g = Gradients::zeros_like(&p);
        g.remove("decoder.block2.bn.gamma");
        let mut s = SgdState::new(SgdConfig::default()).unwrap();
        let before = p.clone();
        match sgd_step(&mut p, &g, &mut s) {
            Err(Error::MissingGradient(name)) => assert_eq!(name, "decoder.block2.bn.gamma"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, before);
    }

    #[test]
    fn momentum_recurrence() {
        let mut p = params();
        let mut g = Gradients::zeros_like(&p);
        p.classifier.output.bias[1] = 1.0;
        g.get_mut("classifier.output.bias").unwrap()[1] = 0.5;
        let cfg = SgdConfig { momentum: 0.9, ..SgdConfig::default() };
        let mut s = SgdState::new(cfg).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        // v1 = g, v2 = 0.9 g + g; p2 = p0 - lr (v1 + v2) = 1 - 0.0004 * 0.5 * 2.9
        let want = 1.0 - 0.0004 * 0.5 - 0.0004 * (0.9 * 0.5 + 0.5);
        assert!((p.classifier.output.bias[1] - want).abs() < 1e-16);
    }

    #[test]
    fn classifier_only_gradient_leaves_autoencoder_untouched() {
        let mut p = params();
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        for (name, v) in Gradients::zeros_like(&p).group(Group::Classifier) {
            g.insert(name, vec![0.3; v.len()]);
        }
        let mut s = SgdState::new(SgdConfig::default()).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.encoder, before.encoder);
        assert_eq!(p.decoder, before.decoder);
        assert_ne!(p.classifier, before.classifier);
    }

    #[test]
    fn quadratic_decreases() {
        // f(p) = p^2 on a single scalar.
        let mut p = params();
        let mut s = SgdState::new(SgdConfig::default()).unwrap();
        p.encoder.fc.bias[0] = 3.0;
        let f0 = 9.0;
        let mut g = Gradients::zeros_like(&p);
        g.get_mut("encoder.fc.bias").unwrap()[0] = 2.0 * 3.0;
        sgd_step(&mut p, &g, &mut s).unwrap();
        let f1 = p.encoder.fc.bias[0].powi(2);
        assert!(f1 < f0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SgdState::new(SgdConfig { step_size: 0, ..SgdConfig::default() }).is_err());
        assert!(SgdState::new(SgdConfig { decay: 1.5, ..SgdConfig::default() }).is_err());
        assert!(SgdState::new(SgdConfig { lr_cae: 0.0, ..SgdConfig::default() }).is_err());
    }
}
