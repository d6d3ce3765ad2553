//! The joint training loop.

use crate::data::{assemble_batches, Label, Sample};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{backward, forward_traced, Architecture, JdfdParams};
use crate::objective::{joint_loss, LossWeights};
use crate::optim::{scheduler_step, sgd_step, SgdConfig, SgdState};
use crate::rng::Rng;
use crate::tensor::Tensor;

const INIT_SALT: u64 = 0x1417;
const BATCH_SALT: u64 = 0xBA7C;

/// Everything that determines a training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSettings {
    pub arch: Architecture,
    pub weights: LossWeights,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Train without the decoder (classification loss only).
    pub baseline: bool,
    pub foreign_ratio: f64,
}

impl TrainSettings {
    pub fn new(arch: Architecture) -> Self {
        TrainSettings {
            arch,
            weights: LossWeights::default(),
            sgd: SgdConfig::default(),
            batch_size: 4,
            epochs: 10,
            seed: 0,
            baseline: false,
            foreign_ratio: 0.0,
        }
    }

    /// Weights actually used: the baseline drops the reconstruction term.
    pub fn effective_weights(&self) -> Result<LossWeights> {
        if self.baseline {
            LossWeights::new(self.weights.beta1, 0.0).map(|w| LossWeights { reduction: self.weights.reduction, ..w })
        } else {
            Ok(self.weights)
        }
    }
}

/// Epoch means of the batch losses and the learning rates used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub l_cro: f64,
    pub l_rec: f64,
    pub l_total: f64,
    pub lr_cae: f64,
    pub lr_cls: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: JdfdParams,
    pub log: Vec<EpochLog>,
    /// Unlabeled samples that received a nonzero classification gradient.
    /// Always zero unless the objective is broken.
    pub foreign_cro_terms: usize,
    /// Unlabeled samples seen over the whole run.
    pub foreign_seen: usize,
}

/// Initial parameters for a run.
pub fn initial_params(settings: &TrainSettings) -> JdfdParams {
    JdfdParams::init(settings.arch, !settings.baseline, &mut Rng::derive(settings.seed, INIT_SALT))
}

/// Train on `primary`, mixing in unlabeled samples from `foreign` at
/// `settings.foreign_ratio`. Joint and baseline runs with the same seed see
/// the same initial encoder/classifier and the same batch sequence.
pub fn train(settings: &TrainSettings, primary: &[Sample], foreign: &[&[Sample]]) -> Result<TrainOutcome> {
    let weights = settings.effective_weights()?;
    let mut params = initial_params(settings);
    let mut state = SgdState::new(settings.sgd)?;
    let mut rng = Rng::derive(settings.seed, BATCH_SALT);
    let mut stream = assemble_batches(primary, foreign, settings.batch_size, settings.foreign_ratio, &mut rng)?;
    let tiny_grid = settings.arch.grid() == (1, 1);

    let mut log = Vec::with_capacity(settings.epochs);
    let (mut foreign_cro_terms, mut foreign_seen) = (0, 0);
    for epoch in 1..=settings.epochs {
        let mut batches = stream.next_epoch();
        // Train-mode batchnorm needs two values per channel.
        if tiny_grid && batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            let last = batches.pop().expect("non-empty");
            batches.last_mut().expect("non-empty").extend(last);
        }
        let (mut sum_cro, mut n_cro_batches, mut sum_rec, mut sum_total) = (0.0, 0usize, 0.0, 0.0);
        for (b, idx) in batches.iter().enumerate() {
            let samples: Vec<&Sample> = idx.iter().map(|&i| stream.get(i)).collect();
            let x = Tensor::stack(samples.iter().map(|s| &s.image))?;
            let labels: Vec<Option<Label>> = samples.iter().map(|s| s.label).collect();
            let pass = forward_traced(&x, &params, Mode::Train)?;
            let (report, grads) = joint_loss(&x, &pass.output, &labels, weights)?;
            if !report.l_total.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b} (ids {:?})", ids(&samples))));
            }
            for (i, l) in labels.iter().enumerate() {
                if l.is_none() {
                    foreign_seen += 1;
                    if let Some(g) = &grads.logits {
                        foreign_cro_terms += usize::from(g.sample(i).iter().any(|&v| v != 0.0));
                    }
                }
            }
            let g = backward(&params, &pass, grads.logits.as_ref(), grads.reconstruction.as_ref())?;
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient at epoch {epoch}, batch {b} (ids {:?})", ids(&samples))));
            }
            sgd_step(&mut params, &g, &mut state)?;
            params.commit_batch_stats(&pass);
            if report.n_cro > 0 {
                sum_cro += report.l_cro;
                n_cro_batches += 1;
            }
            sum_rec += report.l_rec;
            sum_total += report.l_total;
        }
        let n = batches.len() as f64;
        log.push(EpochLog {
            epoch,
            l_cro: if n_cro_batches > 0 { sum_cro / n_cro_batches as f64 } else { 0.0 },
            l_rec: sum_rec / n,
            l_total: sum_total / n,
            lr_cae: state.lr_cae,
            lr_cls: state.lr_cls,
        });
        scheduler_step(&mut state);
    }
    Ok(TrainOutcome { params, log, foreign_cro_terms, foreign_seen })
}

fn ids(samples: &[&Sample]) -> Vec<u64> {
    samples.iter().map(|s| s.id).collect()
}

/// The training log as CSV.
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,l_cro,l_rec,l_total,lr_cae,lr_cls\n");
    for e in log {
        out.push_str(&format!("{},{},{},{},{},{}\n", e.epoch, e.l_cro, e.l_rec, e.l_total, e.lr_cae, e.lr_cls));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, Counts, FamilySpec};

    fn tiny(seed: u64) -> (TrainSettings, Vec<Sample>) {
        let arch = Architecture::new(16, 16, 8).unwrap();
        let mut s = TrainSettings::new(arch);
        s.epochs = 2;
        s.seed = seed;
        let data = generate_dataset(&FamilySpec::by_name("U").unwrap(), Counts::new(5, 4, 1, 1), 1, 16, 16).unwrap();
        (s, data.train)
    }

    #[test]
    fn runs_are_reproducible() {
        let (s, data) = tiny(4);
        let a = train(&s, &data, &[]).unwrap();
        let b = train(&s, &data, &[]).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 2);
        assert_eq!(a.log[0].epoch, 1);
    }

    #[test]
    fn baseline_has_no_decoder_and_shares_init() {
        let (mut s, _) = tiny(5);
        let joint = initial_params(&s);
        s.baseline = true;
        let base = initial_params(&s);
        assert!(!base.has_decoder());
        assert_eq!(base.encoder, joint.encoder);
        assert_eq!(base.classifier, joint.classifier);
    }

    #[test]
    fn log_format() {
        let log = [EpochLog { epoch: 1, l_cro: 0.5, l_rec: 2.0, l_total: 0.8, lr_cae: 0.005, lr_cls: 0.0004 }];
        assert_eq!(log_csv(&log), "epoch,l_cro,l_rec,l_total,lr_cae,lr_cls\n1,0.5,2,0.8,0.005,0.0004\n");
    }
}
