//! Central-difference gradient verification.

mod suite;

pub use suite::{run_suite, LayerCheck, SUITE_LAYERS, SUITE_THRESHOLD};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Loss value and analytic gradient for every parameter tensor.
pub type LossAndGrads = (f64, Vec<Tensor>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, element index) of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
    /// Elements whose step had to shrink to stay on one smooth piece.
    pub shrunk: usize,
}

const MAX_SHRINKS: usize = 6;

/// Relative error as `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub eps: f64,
    /// Check at most this many randomly chosen elements per tensor.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
    /// Five-point stencil instead of the two-point central difference.
    pub fourth_order: bool,
}

impl GradCheck {
    pub fn new(eps: f64) -> Self {
        GradCheck { eps, max_per_tensor: None, seed: 0, fourth_order: false }
    }

    pub fn fourth_order(mut self) -> Self {
        self.fourth_order = true;
        self
    }

    pub fn sampled(mut self, per_tensor: usize, seed: u64) -> Self {
        self.max_per_tensor = Some(per_tensor);
        self.seed = seed;
        self
    }

    pub fn run<F>(&self, params: &[Tensor], mut f: F) -> Result<GradCheckReport>
    where
        F: FnMut(&[Tensor]) -> Result<LossAndGrads>,
    {
        self.run_piecewise(params, |p| f(p).map(|(l, g)| (l, g, 0)))
    }

    /// Like [`run`](Self::run) for piecewise-smooth losses. `f` also returns
    /// an id of the smooth piece containing its argument (for example a hash
    /// of every ReLU's on/off state). When `x ± eps` leaves the piece of `x`
    /// the step is shrunk eightfold, up to `MAX_SHRINKS` times.
    pub fn run_piecewise<F>(&self, params: &[Tensor], mut f: F) -> Result<GradCheckReport>
    where
        F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>, u64)>,
    {
        if !(self.eps > 0.0) {
            return Err(Error::invalid("grad_check: eps must be positive"));
        }
        let mut work: Vec<Tensor> = params.to_vec();
        let (loss, analytic, piece) = f(&work)?;
        ensure_finite(loss)?;
        if analytic.len() != params.len() {
            return Err(Error::shape(format!(
                "grad_check: {} gradients for {} parameters",
                analytic.len(),
                params.len()
            )));
        }
        for (i, (g, p)) in analytic.iter().zip(params).enumerate() {
            if g.len() != p.len() {
                return Err(Error::shape(format!("grad_check: gradient {i} has wrong length")));
            }
        }

        let mut rng = Rng::new(self.seed);
        let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0, shrunk: 0 };
        for p in 0..params.len() {
            for e in self.elements(params[p].len(), &mut rng) {
                let orig = work[p].data()[e];
                // A power-of-two step keeps `x ± eps` exact for most `x`.
                let mut eps = 2f64.powi(self.eps.log2().round() as i32);
                let mut shrinks = 0;
                let numeric = loop {
                    let mut eval = |k: f64| -> Result<(f64, bool)> {
                        work[p].data_mut()[e] = orig + k * eps;
                        let (l, _, id) = f(&work)?;
                        ensure_finite(l)?;
                        Ok((l, id == piece))
                    };
                    let (plus, a) = eval(1.0)?;
                    let (minus, b) = eval(-1.0)?;
                    let (plus2, minus2, c) = if self.fourth_order {
                        let (p2, c1) = eval(2.0)?;
                        let (m2, c2) = eval(-2.0)?;
                        (p2, m2, c1 && c2)
                    } else {
                        (0.0, 0.0, true)
                    };
                    if (a && b && c) || shrinks == MAX_SHRINKS {
                        break if self.fourth_order {
                            (8.0 * (plus - minus) - (plus2 - minus2)) / (12.0 * eps)
                        } else {
                            // Divide by the step actually taken after rounding.
                            (plus - minus) / ((orig + eps) - (orig - eps))
                        };
                    }
                    eps /= 8.0;
                    shrinks += 1;
                };
                work[p].data_mut()[e] = orig;
                let err = relative_error(analytic[p].data()[e], numeric);
                report.checked += 1;
                report.shrunk += usize::from(shrinks > 0);
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = (p, e);
                }
            }
        }
        Ok(report)
    }

    fn elements(&self, len: usize, rng: &mut Rng) -> Vec<usize> {
        match self.max_per_tensor {
            Some(k) if k < len => {
                let mut idx: Vec<usize> = (0..len).collect();
                rng.shuffle(&mut idx);
                idx.truncate(k);
                idx.sort_unstable();
                idx
            }
            _ => (0..len).collect(),
        }
    }
}

fn ensure_finite(loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("grad_check: loss evaluated to {loss}")))
    }
}

/// Max relative error between analytic and central-difference gradients
/// over every element of every parameter.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<LossAndGrads>,
{
    GradCheck::new(eps).run(params, f).map(|r| r.max_rel_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::from_vec(Shape::flat(1, 3), vec![0.3, -1.0, 2.0]).unwrap();
        let err = grad_check(|p| Ok((p[0].sum(), vec![Tensor::full(p[0].shape(), 1.0)])), &[x], 1e-6).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn square_has_linear_gradient() {
        let x = Tensor::from_vec(Shape::flat(1, 2), vec![1.0, 2.0]).unwrap();
        let err = grad_check(|p| Ok((p[0].dot(&p[0]), vec![p[0].scale(2.0)])), &[x], 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = Tensor::from_vec(Shape::flat(1, 2), vec![1.0, 2.0]).unwrap();
        let err = grad_check(|p| Ok((p[0].dot(&p[0]), vec![p[0].scale(2.1)])), &[x], 1e-5).unwrap();
        assert!(err > 1e-2);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let x = Tensor::zeros(Shape::flat(1, 1));
        let res = grad_check(|p| Ok((f64::NAN, vec![p[0].clone()])), &[x], 1e-5);
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn sampling_limits_work() {
        let x = Tensor::zeros(Shape::flat(1, 100));
        let report = GradCheck::new(1e-5)
            .sampled(7, 3)
            .run(&[x], |p| Ok((p[0].sum(), vec![Tensor::full(p[0].shape(), 1.0)])))
            .unwrap();
        assert_eq!(report.checked, 7);
    }
}
