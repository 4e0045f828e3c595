//! Across-channel local response normalization.
//!
//! `out[c] = in[c] / (k + alpha/n * sum_{c' in window(c)} in[c']^2)^beta`
//! with the window spanning `n/2` channels on each side, clipped at the
//! channel boundaries.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        Self {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 2 == 0 {
            return Err(Error::invalid(format!(
                "LRN window size must be odd and >= 1, got {}",
                self.size
            )));
        }
        if !(self.k > 0.0) {
            return Err(Error::invalid(format!("LRN k must be > 0, got {}", self.k)));
        }
        if !(self.alpha >= 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid("LRN alpha must be >= 0 and beta finite"));
        }
        Ok(())
    }
}

/// Forward output plus the per-element denominator base `k + alpha/n * sum`.
#[derive(Clone, Debug)]
pub struct Normalized<S> {
    pub output: Tensor<S>,
    pub denom: Tensor<S>,
}

pub fn lrn<S: Scalar>(input: &Tensor<S>, p: &LrnParams) -> Result<Tensor<S>> {
    lrn_cached(input, p).map(|n| n.output)
}

pub fn lrn_cached<S: Scalar>(input: &Tensor<S>, p: &LrnParams) -> Result<Normalized<S>> {
    p.validate()?;
    let (c, h, w) = input.dims3()?;
    let plane = h * w;
    let half = p.size / 2;
    let x = input.data();
    let scale = S::of(p.alpha / p.size as f64);
    let beta = S::of(p.beta);
    let mut denom = Tensor::full(&[c, h, w], S::of(p.k));
    let dd = denom.data_mut();
    for ch in 0..c {
        let lo = ch.saturating_sub(half);
        let hi = (ch + half).min(c - 1);
        let dst = &mut dd[ch * plane..(ch + 1) * plane];
        for src in lo..=hi {
            let xs = &x[src * plane..(src + 1) * plane];
            for (d, &v) in dst.iter_mut().zip(xs) {
                *d += scale * v * v;
            }
        }
    }
    let mut out = input.clone();
    for (o, &d) in out.data_mut().iter_mut().zip(denom.data()) {
        *o /= d.powf(beta);
    }
    Ok(Normalized { output: out, denom })
}

pub fn lrn_backward<S: Scalar>(
    input: &Tensor<S>,
    denom: &Tensor<S>,
    p: &LrnParams,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (c, h, w) = input.dims3()?;
    if grad_out.shape() != input.shape() || denom.shape() != input.shape() {
        return Err(Error::shape("LRN backward shapes disagree with input"));
    }
    let plane = h * w;
    let half = p.size / 2;
    let x = input.data();
    let d = denom.data();
    let g = grad_out.data();
    let beta = S::of(p.beta);
    let coef = S::of(2.0 * p.alpha * p.beta / p.size as f64);
    // t[c] = g[c] * x[c] * d[c]^(-beta-1)
    let t: Vec<S> = (0..x.len())
        .map(|i| g[i] * x[i] * d[i].powf(-beta - S::one()))
        .collect();
    let mut gin = Tensor::zeros(&[c, h, w]);
    let gx = gin.data_mut();
    for ch in 0..c {
        let lo = ch.saturating_sub(half);
        let hi = (ch + half).min(c - 1);
        for i in 0..plane {
            let j = ch * plane + i;
            let mut acc = S::zero();
            for src in lo..=hi {
                acc += t[src * plane + i];
            }
            gx[j] = g[j] * d[j].powf(-beta) - coef * x[j] * acc;
        }
    }
    Ok(gin)
}
