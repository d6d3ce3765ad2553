//! Classification cross-entropy, reconstruction error, and their weighted sum.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::model::ModelOutput;
use crate::tensor::{Shape, Tensor};

const PROB_FLOOR: f64 = 1e-12;

/// How squared reconstruction differences are reduced to a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// Sum over each sample's pixels and channels, mean over the batch.
    SampleSum,
    /// Mean over every element of the batch.
    ElementMean,
}

impl Reduction {
    pub fn name(&self) -> &'static str {
        match self {
            Reduction::SampleSum => "sample_sum",
            Reduction::ElementMean => "element_mean",
        }
    }

    /// Divisor applied to the summed squared error of a batch.
    fn divisor(&self, shape: Shape) -> f64 {
        match self {
            Reduction::SampleSum => shape.n as f64,
            Reduction::ElementMean => shape.len() as f64,
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sample_sum" => Ok(Reduction::SampleSum),
            "element_mean" => Ok(Reduction::ElementMean),
            _ => Err(format!("expected `sample_sum` or `element_mean`, found `{s}`")),
        }
    }
}

/// Weights of the classification and reconstruction terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub reduction: Reduction,
}

impl LossWeights {
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        if !(beta1 >= 0.0 && beta2 >= 0.0 && beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::invalid(format!("loss weights must be finite and non-negative, got ({beta1}, {beta2})")));
        }
        if beta1 == 0.0 && beta2 == 0.0 {
            return Err(Error::invalid("loss weights cannot both be zero"));
        }
        Ok(LossWeights { beta1, beta2, reduction: Reduction::ElementMean })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { beta1: 0.8, beta2: 0.2, reduction: Reduction::ElementMean }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub l_cro: f64,
    pub l_rec: f64,
    pub l_total: f64,
    /// Samples contributing to the cross-entropy term (labeled ones).
    pub n_cro: usize,
    /// Samples contributing to the reconstruction term.
    pub n_rec: usize,
}

/// Upstream gradients for [`crate::model::backward`].
#[derive(Clone, Debug)]
pub struct LossGrads {
    pub logits: Option<Tensor>,
    pub reconstruction: Option<Tensor>,
}

fn check_probs(probs: &Tensor, n: usize) -> Result<()> {
    if probs.shape() != Shape::flat(n, 2) {
        return Err(Error::shape(format!("cross_entropy: probabilities {} for {n} labels", probs.shape())));
    }
    Ok(())
}

/// Mean binary cross-entropy; column 1 of `probs` is the fake probability.
pub fn cross_entropy(probs: &Tensor, labels: &[Label]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("cross_entropy: empty batch"));
    }
    check_probs(probs, labels.len())?;
    let total: f64 = probs
        .data()
        .chunks(2)
        .zip(labels)
        .map(|(p, y)| {
            let p = p[y.index()].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            -p.ln()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of [`cross_entropy`] with respect to the logits that produced
/// `probs` through a softmax: `(p - onehot(y)) / N`.
pub fn cross_entropy_grad(probs: &Tensor, labels: &[Label]) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::invalid("cross_entropy: empty batch"));
    }
    check_probs(probs, labels.len())?;
    let n = labels.len() as f64;
    let mut g = probs.clone();
    for (row, y) in g.data_mut().chunks_mut(2).zip(labels) {
        row[y.index()] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(g)
}

fn check_recon(x: &Tensor, recon: &Tensor) -> Result<()> {
    if x.shape() != recon.shape() {
        return Err(Error::shape(format!("reconstruction error: {} vs {}", x.shape(), recon.shape())));
    }
    if x.shape().n == 0 {
        return Err(Error::invalid("reconstruction error: empty batch"));
    }
    Ok(())
}

/// Squared reconstruction error under the given reduction.
pub fn reconstruction_error(x: &Tensor, recon: &Tensor, reduction: Reduction) -> Result<f64> {
    check_recon(x, recon)?;
    let sq: f64 = x.data().iter().zip(recon.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / reduction.divisor(x.shape()))
}

/// `d/d recon` of [`reconstruction_error`]: `-2 (x - recon) / divisor`.
pub fn reconstruction_error_grad(x: &Tensor, recon: &Tensor, reduction: Reduction) -> Result<Tensor> {
    check_recon(x, recon)?;
    let d = reduction.divisor(x.shape());
    let data = x.data().iter().zip(recon.data()).map(|(a, b)| -2.0 * (a - b) / d).collect();
    Tensor::from_vec(x.shape(), data)
}

/// Sum of squared differences per sample, averaged over the batch.
pub fn reconstruction_mse(x: &Tensor, recon: &Tensor) -> Result<f64> {
    reconstruction_error(x, recon, Reduction::SampleSum)
}

/// `d/d recon` of [`reconstruction_mse`]: `-2 (x - recon) / N`.
pub fn reconstruction_mse_grad(x: &Tensor, recon: &Tensor) -> Result<Tensor> {
    reconstruction_error_grad(x, recon, Reduction::SampleSum)
}

/// Weighted joint loss over one forward pass. Cross-entropy averages over
/// the labeled samples only; reconstruction covers every sample. Each
/// returned gradient is already scaled by its weight.
pub fn joint_loss(
    input: &Tensor,
    output: &ModelOutput,
    labels: &[Option<Label>],
    weights: LossWeights,
) -> Result<(LossReport, LossGrads)> {
    let n = input.shape().n;
    if labels.len() != n {
        return Err(Error::shape(format!("joint_loss: {} labels for a batch of {n}", labels.len())));
    }
    let labeled: Vec<(usize, Label)> = labels.iter().enumerate().filter_map(|(i, l)| l.map(|l| (i, l))).collect();

    let (l_cro, d_logits) = if labeled.is_empty() {
        (0.0, None)
    } else {
        let probs = &output.probabilities;
        let sub = Tensor::stack(labeled.iter().map(|&(i, _)| probs.slice_sample(i)).collect::<Vec<_>>().iter())?;
        let ys: Vec<Label> = labeled.iter().map(|&(_, l)| l).collect();
        let loss = cross_entropy(&sub, &ys)?;
        let g_sub = cross_entropy_grad(&sub, &ys)?;
        let mut g = Tensor::zeros(probs.shape());
        for (k, &(i, _)) in labeled.iter().enumerate() {
            for (dst, src) in g.sample_mut(i).iter_mut().zip(g_sub.sample(k)) {
                *dst = weights.beta1 * src;
            }
        }
        (loss, Some(g))
    };

    let (l_rec, n_rec, d_recon) = match &output.reconstruction {
        Some(recon) if weights.beta2 > 0.0 => {
            let loss = reconstruction_error(input, recon, weights.reduction)?;
            let g = reconstruction_error_grad(input, recon, weights.reduction)?.scale(weights.beta2);
            (loss, n, Some(g))
        }
        Some(recon) => (reconstruction_error(input, recon, weights.reduction)?, n, None),
        None => (0.0, 0, None),
    };

    let report = LossReport {
        l_cro,
        l_rec,
        l_total: weights.beta1 * l_cro + weights.beta2 * l_rec,
        n_cro: labeled.len(),
        n_rec,
    };
    Ok((report, LossGrads { logits: d_logits, reconstruction: d_recon }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_vec(Shape::flat(rows.len(), 2), rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn uniform_prediction_is_ln2() {
        for y in [Label::Real, Label::Fake] {
            let l = cross_entropy(&probs(&[[0.5, 0.5]]), &[y]).unwrap();
            assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let l = cross_entropy(&probs(&[[0.0, 1.0]]), &[Label::Fake]).unwrap();
        assert!((0.0..=1e-11).contains(&l), "{l}");
        let l = cross_entropy(&probs(&[[0.0, 1.0]]), &[Label::Real]).unwrap();
        assert!((l - 27.631021115928547).abs() < 1e-9, "clamped at 1e-12: {l}");
    }

    #[test]
    fn hand_evaluated_mean() {
        let l = cross_entropy(&probs(&[[0.25, 0.75], [0.9, 0.1]]), &[Label::Fake, Label::Real]).unwrap();
        let want = (-(0.75f64).ln() - (0.9f64).ln()) / 2.0;
        assert!((l - want).abs() < 1e-15);
        assert!((l - 0.196_521_294).abs() < 1e-9, "{l}");
    }

    #[test]
    fn empty_batch_is_error() {
        assert!(cross_entropy(&Tensor::zeros(Shape::flat(0, 2)), &[]).is_err());
    }

    #[test]
    fn mse_cases() {
        let x = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        let z = Tensor::zeros(Shape::new(1, 1, 1, 1));
        assert_eq!(reconstruction_mse(&x, &x).unwrap(), 0.0);
        assert_eq!(reconstruction_mse(&x, &z).unwrap(), 1.0);
        let a = Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![1.0, 2.0]).unwrap();
        let b = Tensor::zeros(Shape::new(2, 1, 1, 1));
        assert_eq!(reconstruction_mse(&a, &b).unwrap(), 2.5);
        assert!(reconstruction_mse(&a, &x).is_err());
    }

    #[test]
    fn reductions_differ_by_sample_size() {
        let a = Tensor::from_fn(Shape::new(2, 3, 2, 2), |n, c, h, w| (n + c + h + w) as f64 * 0.1);
        let b = Tensor::zeros(a.shape());
        let per_sample = reconstruction_error(&a, &b, Reduction::SampleSum).unwrap();
        let per_element = reconstruction_error(&a, &b, Reduction::ElementMean).unwrap();
        assert!((per_sample - 12.0 * per_element).abs() < 1e-12);
        let g = reconstruction_error_grad(&a, &b, Reduction::ElementMean).unwrap();
        assert!((g.at(1, 2, 1, 1) + 2.0 * a.at(1, 2, 1, 1) / 24.0).abs() < 1e-15);
        assert_eq!("element_mean".parse::<Reduction>(), Ok(Reduction::ElementMean));
        assert!("mean".parse::<Reduction>().is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-0.1, 1.0).is_err());
        assert_eq!(LossWeights::default(), LossWeights::new(0.8, 0.2).unwrap());
    }

    #[test]
    fn total_is_weighted_sum() {
        let w = LossWeights::default();
        let total = w.beta1 * 1.0 + w.beta2 * 0.5;
        assert!((total - 0.9).abs() < 1e-15);
    }
}
