use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

fn check(op: &str, input: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize)> {
    let n = input.shape().n;
    let d = input.shape().sample_len();
    let ws = weight.shape();
    let m = ws.n;
    if ws.sample_len() != d {
        return Err(Error::shape(format!(
            "{op}: input has {d} features but weight expects {} (dimension d)",
            ws.sample_len()
        )));
    }
    Ok((n, d, m))
}

/// `y = x W^T + b` for `x (n, d)` flattened per sample and `W (m, d)`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (n, d, m) = check("linear", input, weight)?;
    if bias.len() != m {
        return Err(Error::shape(format!("linear: bias has {} entries, expected {m} (dimension m)", bias.len())));
    }
    let mut out = Tensor::zeros(Shape::flat(n, m));
    if n > 0 {
        for row in out.data_mut().chunks_mut(m) {
            row.copy_from_slice(bias);
        }
        gemm(n, d, m, input.data(), false, weight.data(), true, 1.0, out.data_mut());
    }
    Ok(out)
}

pub fn linear_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<LinearGrads> {
    let (n, d, m) = check("linear_backward", input, weight)?;
    if grad_out.shape() != Shape::flat(n, m) {
        return Err(Error::shape(format!(
            "linear_backward: gradient {} but output was {}",
            grad_out.shape(),
            Shape::flat(n, m)
        )));
    }
    let mut gin = vec![0.0; n * d];
    let mut gw = vec![0.0; m * d];
    gemm(n, m, d, grad_out.data(), false, weight.data(), false, 0.0, &mut gin);
    gemm(m, n, d, grad_out.data(), true, input.data(), false, 0.0, &mut gw);
    let mut gb = vec![0.0; m];
    for row in grad_out.data().chunks(m.max(1)).take(n) {
        gb.iter_mut().zip(row).for_each(|(b, g)| *b += g);
    }
    Ok(LinearGrads {
        input: Tensor::from_vec(input.shape(), gin)?,
        weight: Tensor::from_vec(weight.shape(), gw)?,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight() {
        let x = Tensor::from_vec(Shape::flat(2, 3), vec![1.0, -2.0, 3.0, 4.0, 5.0, -6.0]).unwrap();
        let w = Tensor::from_fn(Shape::flat(3, 3), |i, j, _, _| if i == j { 1.0 } else { 0.0 });
        assert_eq!(linear(&x, &w, &[0.0; 3]).unwrap(), x);
    }

    #[test]
    fn small_hand_case() {
        let x = Tensor::from_vec(Shape::flat(1, 2), vec![1.0, 2.0]).unwrap();
        let w = Tensor::from_vec(Shape::flat(1, 2), vec![3.0, 4.0]).unwrap();
        assert_eq!(linear(&x, &w, &[1.0]).unwrap().data(), &[12.0]);
    }

    #[test]
    fn accepts_unflattened_input() {
        let x = Tensor::full(Shape::new(1, 2, 2, 1), 1.0);
        let w = Tensor::full(Shape::flat(1, 4), 0.5);
        assert_eq!(linear(&x, &w, &[0.0]).unwrap().data(), &[2.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let x = Tensor::zeros(Shape::flat(1, 3));
        let w = Tensor::zeros(Shape::flat(2, 4));
        assert!(linear(&x, &w, &[0.0; 2]).is_err());
        let w = Tensor::zeros(Shape::flat(2, 3));
        assert!(linear(&x, &w, &[0.0; 3]).is_err());
    }
}
