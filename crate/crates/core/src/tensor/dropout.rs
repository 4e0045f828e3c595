//! Inverted dropout: survivors are scaled by `1/(1-p)` at train time so the
//! eval path is the identity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub struct Dropped<S> {
    pub output: Tensor<S>,
    /// Per-element multiplier applied in train mode; `None` in eval mode.
    pub mask: Option<Tensor<S>>,
}

pub fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::invalid(format!(
            "dropout ratio must lie in [0, 1), got {ratio}"
        )));
    }
    Ok(())
}

pub fn dropout<S: Scalar, R: Rng + ?Sized>(
    input: &Tensor<S>,
    ratio: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Dropped<S>> {
    check_ratio(ratio)?;
    if mode == Mode::Eval {
        return Ok(Dropped {
            output: input.clone(),
            mask: None,
        });
    }
    let keep = S::of(1.0 / (1.0 - ratio));
    let mask = Tensor::from_fn(input.shape(), |_| {
        if ratio > 0.0 && rng.random::<f64>() < ratio {
            S::zero()
        } else {
            keep
        }
    });
    let mut output = input.clone();
    for (o, &m) in output.data_mut().iter_mut().zip(mask.data()) {
        *o *= m;
    }
    Ok(Dropped {
        output,
        mask: Some(mask),
    })
}

pub fn dropout_backward<S: Scalar>(mask: Option<&Tensor<S>>, grad_out: &Tensor<S>) -> Tensor<S> {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let mut g = grad_out.clone();
            for (gv, &mv) in g.data_mut().iter_mut().zip(m.data()) {
                *gv *= mv;
            }
            g
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_fn(&[10], |i| i as f64 * 0.3 - 1.0);
        let d = dropout(&x, 0.9, Mode::Eval, &mut rng).unwrap();
        assert_eq!(d.output, x);
        assert!(d.mask.is_none());
    }

    #[test]
    fn zero_ratio_train_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::from_fn(&[10], |i| i as f64);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap().output, x);
    }

    #[test]
    fn ratio_one_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::zeros(&[3]);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn half_dropout_preserves_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::full(&[100_000], 1.0f64);
        let d = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean = d.output.sum() / 1e5;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
    }
}
