//! Losses on a two-class probability vector.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(p[1] - label)^2`, the squared-error objective over the popular-class output.
    Squared,
    /// `-ln p[label]`.
    #[default]
    CrossEntropy,
}

fn check<S: Scalar>(probs: &Tensor<S>, label: u8) -> Result<()> {
    if probs.len() != 2 {
        return Err(Error::shape(format!(
            "loss expects a 2-vector, got {:?}",
            probs.shape()
        )));
    }
    if label > 1 {
        return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
    }
    Ok(())
}

pub fn loss<S: Scalar>(probs: &Tensor<S>, label: u8, kind: LossKind) -> Result<S> {
    loss_with_floor(probs, label, kind, DEFAULT_PROB_FLOOR)
}

pub fn loss_with_floor<S: Scalar>(probs: &Tensor<S>, label: u8, kind: LossKind, floor: f64) -> Result<S> {
    check(probs, label)?;
    let p = probs.data();
    Ok(match kind {
        LossKind::Squared => {
            let d = p[1] - S::of(label as f64);
            d * d
        }
        LossKind::CrossEntropy => -p[label as usize].max(S::of(floor)).ln(),
    })
}

/// d(loss)/d(probs).
pub fn loss_grad<S: Scalar>(probs: &Tensor<S>, label: u8, kind: LossKind) -> Result<Tensor<S>> {
    loss_grad_with_floor(probs, label, kind, DEFAULT_PROB_FLOOR)
}

pub fn loss_grad_with_floor<S: Scalar>(
    probs: &Tensor<S>,
    label: u8,
    kind: LossKind,
    floor: f64,
) -> Result<Tensor<S>> {
    check(probs, label)?;
    let p = probs.data();
    let mut g = Tensor::zeros(&[2]);
    match kind {
        LossKind::Squared => {
            g.data_mut()[1] = S::of(2.0) * (p[1] - S::of(label as f64));
        }
        LossKind::CrossEntropy => {
            let pl = p[label as usize];
            if pl > S::of(floor) {
                g.data_mut()[label as usize] = -S::one() / pl;
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = Tensor::from_vec(vec![0.0, 1.0f64]);
        assert_eq!(loss(&p, 1, LossKind::Squared).unwrap(), 0.0);
        let p = Tensor::from_vec(vec![0.5, 0.5f64]);
        assert!((loss(&p, 1, LossKind::CrossEntropy).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_floor_avoids_infinity() {
        let p = Tensor::from_vec(vec![1.0, 0.0f64]);
        let l = loss(&p, 1, LossKind::CrossEntropy).unwrap();
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(loss_grad(&p, 1, LossKind::CrossEntropy).unwrap().is_finite());
    }

    #[test]
    fn rejects_bad_label() {
        let p = Tensor::from_vec(vec![0.5, 0.5f64]);
        assert!(loss(&p, 2, LossKind::Squared).is_err());
    }
}
