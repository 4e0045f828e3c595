use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward<S: Scalar>(input: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "relu gradient {:?} vs input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= S::zero() {
            *gv = S::zero();
        }
    }
    Ok(g)
}

/// Max-subtracted softmax over all elements.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    let m = logits
        .data()
        .iter()
        .copied()
        .fold(S::neg_infinity(), S::max);
    let mut out = logits.map(|v| (v - m).exp());
    let z = out.sum();
    out.data_mut().iter_mut().for_each(|v| *v /= z);
    out
}

/// Vector-Jacobian product of softmax: `p * (g - <g, p>)`.
pub fn softmax_backward<S: Scalar>(probs: &Tensor<S>, grad_probs: &Tensor<S>) -> Result<Tensor<S>> {
    if probs.shape() != grad_probs.shape() {
        return Err(Error::shape("softmax gradient shape mismatch"));
    }
    let dot: S = probs
        .data()
        .iter()
        .zip(grad_probs.data())
        .map(|(&p, &g)| p * g)
        .sum();
    let mut out = probs.clone();
    for (o, &g) in out.data_mut().iter_mut().zip(grad_probs.data()) {
        *o *= g - dot;
    }
    Ok(out)
}
