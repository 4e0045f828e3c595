//! Single LSTM cell step.
//!
//! Parameters are packed as one `[4H, D+H]` weight matrix acting on the
//! concatenation `[x; h_prev]` and a `[4H]` bias, with gate blocks in the
//! order input, forget, output, candidate.

use super::{LayerParams, ParamGrad, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<S> {
    pub hidden: Tensor<S>,
    pub cell: Tensor<S>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden: Tensor::zeros(&[hidden]),
            cell: Tensor::zeros(&[hidden]),
        }
    }

    pub fn size(&self) -> usize {
        self.hidden.len()
    }
}

/// Values saved by the forward step for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmCache<S> {
    pub input: Vec<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub i: Vec<S>,
    pub f: Vec<S>,
    pub o: Vec<S>,
    pub g: Vec<S>,
    pub tanh_c: Vec<S>,
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

fn dims<S: Scalar>(x: &Tensor<S>, state: &LstmState<S>, params: &LayerParams<S>) -> Result<(usize, usize)> {
    let h = state.hidden.len();
    if state.cell.len() != h {
        return Err(Error::shape(format!(
            "LSTM hidden {:?} and cell {:?} differ",
            state.hidden.shape(),
            state.cell.shape()
        )));
    }
    let d = x.len();
    if params.weight.shape() != [4 * h, d + h] || params.bias.len() != 4 * h {
        return Err(Error::shape(format!(
            "LSTM params {:?}/{:?} inconsistent with input {d} and state {h}",
            params.weight.shape(),
            params.bias.shape()
        )));
    }
    Ok((d, h))
}

pub fn lstm_step<S: Scalar>(
    x: &Tensor<S>,
    state: &LstmState<S>,
    params: &LayerParams<S>,
) -> Result<LstmState<S>> {
    lstm_step_cached(x, state, params).map(|(s, _)| s)
}

pub fn lstm_step_cached<S: Scalar>(
    x: &Tensor<S>,
    state: &LstmState<S>,
    params: &LayerParams<S>,
) -> Result<(LstmState<S>, LstmCache<S>)> {
    let (d, h) = dims(x, state, params)?;
    let w = params.weight.data();
    let b = params.bias.data();
    let mut z: Vec<S> = Vec::with_capacity(d + h);
    z.extend_from_slice(x.data());
    z.extend_from_slice(state.hidden.data());
    let pre: Vec<S> = (0..4 * h)
        .map(|r| {
            let row = &w[r * (d + h)..(r + 1) * (d + h)];
            b[r] + row.iter().zip(&z).map(|(&a, &v)| a * v).sum::<S>()
        })
        .collect();
    let i: Vec<S> = pre[..h].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<S> = pre[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<S> = pre[2 * h..3 * h].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<S> = pre[3 * h..].iter().map(|&v| v.tanh()).collect();
    let c_prev = state.cell.data();
    let c: Vec<S> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<S> = c.iter().map(|&v| v.tanh()).collect();
    let hidden: Vec<S> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    let next = LstmState {
        hidden: Tensor::from_vec(hidden),
        cell: Tensor::from_vec(c),
    };
    let cache = LstmCache {
        input: x.data().to_vec(),
        h_prev: state.hidden.data().to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        g,
        tanh_c,
    };
    Ok((next, cache))
}

/// Gradients flowing out of one backward step.
#[derive(Clone, Debug)]
pub struct LstmStepGrad<S> {
    pub input: Tensor<S>,
    pub hidden: Tensor<S>,
    pub cell: Tensor<S>,
}

/// `grad_hidden`/`grad_cell` are the total gradients reaching this step's
/// outputs (from above and from the following step).
pub fn lstm_step_backward<S: Scalar>(
    cache: &LstmCache<S>,
    params: &LayerParams<S>,
    grad_hidden: &Tensor<S>,
    grad_cell: &Tensor<S>,
    grad: &mut ParamGrad<S>,
) -> Result<LstmStepGrad<S>> {
    let h = cache.i.len();
    let d = cache.input.len();
    if grad_hidden.len() != h || grad_cell.len() != h {
        return Err(Error::shape("LSTM backward state gradient size mismatch"));
    }
    let dh = grad_hidden.data();
    let dc_next = grad_cell.data();
    let mut dpre = vec![S::zero(); 4 * h];
    let mut dc_prev = vec![S::zero(); h];
    for k in 0..h {
        let do_ = dh[k] * cache.tanh_c[k];
        let dc = dc_next[k] + dh[k] * cache.o[k] * (S::one() - cache.tanh_c[k] * cache.tanh_c[k]);
        let di = dc * cache.g[k];
        let df = dc * cache.c_prev[k];
        let dg = dc * cache.i[k];
        dc_prev[k] = dc * cache.f[k];
        dpre[k] = di * cache.i[k] * (S::one() - cache.i[k]);
        dpre[h + k] = df * cache.f[k] * (S::one() - cache.f[k]);
        dpre[2 * h + k] = do_ * cache.o[k] * (S::one() - cache.o[k]);
        dpre[3 * h + k] = dg * (S::one() - cache.g[k] * cache.g[k]);
    }
    let w = params.weight.data();
    let gw = grad.weight.data_mut();
    let gb = grad.bias.data_mut();
    let width = d + h;
    let mut dz = vec![S::zero(); width];
    for r in 0..4 * h {
        let gr = dpre[r];
        gb[r] += gr;
        let row = &w[r * width..(r + 1) * width];
        let grow = &mut gw[r * width..(r + 1) * width];
        for j in 0..d {
            grow[j] += gr * cache.input[j];
        }
        for j in 0..h {
            grow[d + j] += gr * cache.h_prev[j];
        }
        for j in 0..width {
            dz[j] += gr * row[j];
        }
    }
    let dh_prev = dz.split_off(d);
    Ok(LstmStepGrad {
        input: Tensor::from_vec(dz),
        hidden: Tensor::from_vec(dh_prev),
        cell: Tensor::from_vec(dc_prev),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(d: usize, h: usize) -> LayerParams<f64> {
        LayerParams::new(Tensor::zeros(&[4 * h, d + h]), Tensor::zeros(&[4 * h]))
    }

    #[test]
    fn zero_weights_zero_state() {
        let p = zero_params(3, 2);
        let x = Tensor::from_vec(vec![0.4, -1.0, 2.0]);
        let (s, cache) = lstm_step_cached(&x, &LstmState::zeros(2), &p).unwrap();
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|&v| v == 0.5));
        assert_eq!(s.cell.data(), &[0.0, 0.0]);
        assert_eq!(s.hidden.data(), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let h = 3;
        let mut p = zero_params(2, h);
        for k in h..2 * h {
            p.bias.data_mut()[k] = 100.0;
        }
        let state = LstmState {
            hidden: Tensor::from_vec(vec![0.1, 0.2, 0.3]),
            cell: Tensor::from_vec(vec![1.5, -0.7, 0.2]),
        };
        let s = lstm_step(&Tensor::from_vec(vec![1.0, -1.0]), &state, &p).unwrap();
        for (a, b) in s.cell.data().iter().zip(state.cell.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn state_mismatch_rejected() {
        let p = zero_params(3, 2);
        let bad = LstmState {
            hidden: Tensor::zeros(&[2]),
            cell: Tensor::zeros(&[3]),
        };
        assert!(lstm_step(&Tensor::zeros(&[3]), &bad, &p).is_err());
        assert!(lstm_step(&Tensor::zeros(&[3]), &LstmState::zeros(4), &p).is_err());
    }
}
