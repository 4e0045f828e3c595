//! SGD with classical momentum: `v <- mu*v - lr*g; w <- w + v`.

use super::{LayerParams, ParamGrad};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Sgd<S> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<ParamGrad<S>>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Applies one update to every layer in order and clears their gradients.
    /// The layer list must be presented in the same order on every call.
    pub fn step(&mut self, layers: &mut [&mut LayerParams<S>]) -> Result<()> {
        for (idx, layer) in layers.iter().enumerate() {
            if !layer.grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter block {idx} contains NaN or Inf"
                )));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = layers.iter().map(|l| ParamGrad::zeros_like(l)).collect();
        } else if self.velocity.len() != layers.len() {
            return Err(Error::invalid(format!(
                "optimizer was initialised for {} parameter blocks, got {}",
                self.velocity.len(),
                layers.len()
            )));
        }
        let lr = S::of(self.lr);
        let mu = S::of(self.momentum);
        for (layer, vel) in layers.iter_mut().zip(self.velocity.iter_mut()) {
            update(layer.weight.data_mut(), vel.weight.data_mut(), layer.grad.weight.data(), lr, mu);
            update(layer.bias.data_mut(), vel.bias.data_mut(), layer.grad.bias.data(), lr, mu);
            layer.zero_grad();
        }
        Ok(())
    }
}

fn update<S: Scalar>(w: &mut [S], v: &mut [S], g: &[S], lr: S, mu: S) {
    for ((wi, vi), &gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        *vi = mu * *vi - lr * gi;
        *wi += *vi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_layer(w: f64, g: f64) -> LayerParams<f64> {
        let mut p = LayerParams::new(Tensor::full(&[1], w), Tensor::zeros(&[1]));
        p.grad.weight.data_mut()[0] = g;
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_layer(1.25, 0.0);
        let mut opt = Sgd::new(0.1, 0.9);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.weight.data(), &[1.25]);
    }

    #[test]
    fn plain_step() {
        let mut p = scalar_layer(1.0, 2.0);
        Sgd::new(0.1, 0.0).step(&mut [&mut p]).unwrap();
        assert!((p.weight.data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(p.grad.weight.data(), &[0.0]);
    }

    #[test]
    fn momentum_recursion_two_steps() {
        // v1 = -0.1*2 = -0.2, w1 = 0.8
        // v2 = 0.9*(-0.2) - 0.1*2 = -0.38, w2 = 0.42
        let mut p = scalar_layer(1.0, 2.0);
        let mut opt = Sgd::new(0.1, 0.9);
        opt.step(&mut [&mut p]).unwrap();
        p.grad.weight.data_mut()[0] = 2.0;
        opt.step(&mut [&mut p]).unwrap();
        assert!((p.weight.data()[0] - 0.42).abs() < 1e-15);
    }

    #[test]
    fn nonfinite_gradient_aborts() {
        let mut p = scalar_layer(1.0, f64::NAN);
        assert!(matches!(
            Sgd::new(0.1, 0.9).step(&mut [&mut p]),
            Err(Error::NonFinite(_))
        ));
    }
}
