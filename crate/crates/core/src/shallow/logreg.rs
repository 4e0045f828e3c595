//! L2-regularised logistic regression by full-batch gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_rows, check_two_classes};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegOptions {
    pub l2: f64,
    /// `None` uses per-block steps bounded by the loss curvature (a
    /// power-iteration estimate for the weights, 2 for the bias), halved
    /// whenever a step would raise the loss.
    pub lr: Option<f64>,
    pub epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            lr: None,
            epochs: 2000,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegReport {
    /// Objective value before the first step and after every step.
    pub losses: Vec<f64>,
    pub final_grad_norm: f64,
    pub lr: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean cross-entropy plus `l2 * |w|^2 / 2`, and its gradient as
/// `(d/dw, d/db)`.
pub fn objective(x: &[Vec<f64>], y: &[u8], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = dot(xi, w) + b;
        // -[y ln s(z) + (1-y) ln(1-s(z))] = softplus(z) - y z
        loss += softplus(z) - yi as f64 * z;
        let r = sigmoid(z) - yi as f64;
        gw.iter_mut().zip(xi).for_each(|(g, v)| *g += r * v);
        gb += r;
    }
    loss /= n;
    gw.iter_mut().zip(w).for_each(|(g, wi)| *g = *g / n + l2 * wi);
    loss += 0.5 * l2 * dot(w, w);
    (loss, gw, gb / n)
}

/// Largest eigenvalue of `X^T X / n` by power iteration.
fn curvature(x: &[Vec<f64>], seed: u64) -> f64 {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..100 {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        v.iter_mut().for_each(|e| *e /= norm);
        let mut next = vec![0.0; d];
        for xi in x {
            let s = dot(xi, &v);
            next.iter_mut().zip(xi).for_each(|(a, b)| *a += s * b);
        }
        next.iter_mut().for_each(|e| *e /= n);
        let est = dot(&next, &v);
        v = next;
        if (est - lambda).abs() <= 1e-9 * est.abs() {
            lambda = est;
            break;
        }
        lambda = est;
    }
    lambda
}

pub fn logreg_train(x: &[Vec<f64>], y: &[u8], opts: &LogRegOptions) -> Result<(LogRegModel, LogRegReport)> {
    let d = check_rows(x, y)?;
    check_two_classes(y)?;
    if !(opts.l2 >= 0.0) {
        return Err(Error::invalid("l2 must be non-negative"));
    }
    let auto = opts.lr.is_none();
    // the Hessian is bounded by 2 * blockdiag(X^T X / (4n) + l2, 1/4)
    let (mut lr, mut lr_bias) = match opts.lr {
        Some(lr) if lr > 0.0 => (lr, lr),
        Some(lr) => return Err(Error::invalid(format!("learning rate {lr} must be positive"))),
        None => (1.0 / (0.5 * curvature(x, opts.seed) * 1.05 + opts.l2), 2.0),
    };
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = objective(x, y, &w, b, opts.l2);
    let mut losses = vec![loss];
    let gnorm = |gw: &[f64], gb: f64| (dot(gw, gw) + gb * gb).sqrt();
    for _ in 0..opts.epochs {
        if gnorm(&gw, gb) < opts.grad_tol {
            break;
        }
        loop {
            let nw: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - lr * g).collect();
            let nb = b - lr_bias * gb;
            let (nl, ngw, ngb) = objective(x, y, &nw, nb, opts.l2);
            if auto && nl > loss && lr_bias > 1e-12 {
                lr *= 0.5;
                lr_bias *= 0.5;
                continue;
            }
            (w, b, loss, gw, gb) = (nw, nb, nl, ngw, ngb);
            break;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("logistic regression loss diverged".into()));
        }
        losses.push(loss);
    }
    let report = LogRegReport {
        losses,
        final_grad_norm: gnorm(&gw, gb),
        lr,
    };
    Ok((LogRegModel { weights: w, bias: b, l2: opts.l2 }, report))
}

impl LogRegModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// `[1 - p, p]` with `p = sigmoid(w . x + b)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        let p = sigmoid(self.decision(x)?);
        Ok([1.0 - p, p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_identities() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn zero_model_is_even() {
        let m = LogRegModel { weights: vec![0.0; 3], bias: 0.0, l2: 0.0 };
        assert_eq!(m.predict_proba(&[1.0, 2.0, 3.0]).unwrap(), [0.5, 0.5]);
        assert!(m.predict_proba(&[1.0]).is_err());
    }

    #[test]
    fn separable_one_dimensional() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            x.push(vec![-1.0]);
            y.push(0);
            x.push(vec![1.0]);
            y.push(1);
        }
        let (m, rep) = logreg_train(&x, &y, &LogRegOptions::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let p = m.predict_proba(xi).unwrap()[1];
            assert_eq!(u8::from(p >= 0.5), yi);
        }
        assert!(rep.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn heavy_regularisation_gives_prior() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0 - 2.0, (i % 3) as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let opts = LogRegOptions { l2: 1e6, ..LogRegOptions::default() };
        let (m, _) = logreg_train(&x, &y, &opts).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-5));
        let p = m.predict_proba(&x[3]).unwrap()[1];
        assert!((p - 0.25).abs() < 1e-3, "{p}");
    }

    #[test]
    fn single_class_rejected() {
        assert!(logreg_train(&[vec![1.0], vec![2.0]], &[1, 1], &LogRegOptions::default()).is_err());
    }
}
