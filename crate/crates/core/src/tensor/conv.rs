//! 2-D cross-correlation over `[C, H, W]` inputs with `[C', C, KH, KW]` kernels.

use serde::{Deserialize, Serialize};

use super::{LayerParams, ParamGrad, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(stride: usize, pad: usize) -> Self {
        Self { stride, pad }
    }
}

/// Output extent along one axis, or an error when the kernel does not tile
/// the padded input exactly.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid("convolution stride must be positive"));
    }
    let padded = input + 2 * pad;
    if kernel == 0 || kernel > padded {
        return Err(Error::shape(format!(
            "kernel {kernel} does not fit padded extent {padded} (input {input}, pad {pad})"
        )));
    }
    if (padded - kernel) % stride != 0 {
        return Err(Error::shape(format!(
            "(input {input} + 2*pad {pad} - kernel {kernel}) is not divisible by stride {stride}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Range of output positions whose tap at kernel offset `k` lands inside the input.
#[inline]
fn valid_range(out_len: usize, in_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // position = o*stride + k - pad must lie in [0, in_len)
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if in_len + pad > k {
        ((in_len + pad - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn check_shapes<S: Scalar>(
    input: &Tensor<S>,
    params: &LayerParams<S>,
    geom: ConvGeometry,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize)> {
    let (c, h, w) = input.dims3()?;
    let (co, ci, kh, kw) = match params.weight.shape()[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(format!(
                "conv kernel must be [C',C,KH,KW], got {:?}",
                params.weight.shape()
            )))
        }
    };
    if ci != c {
        return Err(Error::shape(format!(
            "input {:?} has {c} channels but kernel {:?} expects {ci}",
            input.shape(),
            params.weight.shape()
        )));
    }
    if params.bias.len() != co {
        return Err(Error::shape(format!(
            "bias {:?} does not match {co} output channels",
            params.bias.shape()
        )));
    }
    let ho = conv_output_len(h, kh, geom.stride, geom.pad)?;
    let wo = conv_output_len(w, kw, geom.stride, geom.pad)?;
    Ok((c, h, w, co, kh, kw, ho, wo))
}

pub fn conv2d<S: Scalar>(
    input: &Tensor<S>,
    params: &LayerParams<S>,
    geom: ConvGeometry,
) -> Result<Tensor<S>> {
    let (c, h, w, co, kh, kw, ho, wo) = check_shapes(input, params, geom)?;
    let (stride, pad) = (geom.stride, geom.pad);
    let x = input.data();
    let wt = params.weight.data();
    let mut out = Tensor::zeros(&[co, ho, wo]);
    let od = out.data_mut();
    for oc in 0..co {
        let plane = &mut od[oc * ho * wo..(oc + 1) * ho * wo];
        plane.fill(params.bias.data()[oc]);
        for ic in 0..c {
            let xin = &x[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(ho, h, ky, stride, pad);
                for kx in 0..kw {
                    let wv = wt[((oc * c + ic) * kh + ky) * kw + kx];
                    let (ox_lo, ox_hi) = valid_range(wo, w, kx, stride, pad);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - pad;
                        let row = &xin[iy * w..(iy + 1) * w];
                        let orow = &mut plane[oy * wo..(oy + 1) * wo];
                        for ox in ox_lo..ox_hi {
                            orow[ox] += wv * row[ox * stride + kx - pad];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates kernel and bias gradients into `grad`; returns d(loss)/d(input).
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    params: &LayerParams<S>,
    geom: ConvGeometry,
    grad_out: &Tensor<S>,
    grad: &mut ParamGrad<S>,
) -> Result<Tensor<S>> {
    let (c, h, w, co, kh, kw, ho, wo) = check_shapes(input, params, geom)?;
    if grad_out.shape() != [co, ho, wo] {
        return Err(Error::shape(format!(
            "conv upstream gradient {:?} does not match output [{co},{ho},{wo}]",
            grad_out.shape()
        )));
    }
    let (stride, pad) = (geom.stride, geom.pad);
    let x = input.data();
    let wt = params.weight.data();
    let g = grad_out.data();
    let mut gin = Tensor::zeros(&[c, h, w]);
    let gx = gin.data_mut();
    let gw = grad.weight.data_mut();
    let gb = grad.bias.data_mut();
    for oc in 0..co {
        let gplane = &g[oc * ho * wo..(oc + 1) * ho * wo];
        gb[oc] += gplane.iter().copied().sum::<S>();
        for ic in 0..c {
            let xin = &x[ic * h * w..(ic + 1) * h * w];
            let gxin = &mut gx[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(ho, h, ky, stride, pad);
                for kx in 0..kw {
                    let widx = ((oc * c + ic) * kh + ky) * kw + kx;
                    let wv = wt[widx];
                    let (ox_lo, ox_hi) = valid_range(wo, w, kx, stride, pad);
                    let mut acc = S::zero();
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - pad;
                        let grow = &gplane[oy * wo..(oy + 1) * wo];
                        let xrow = &xin[iy * w..(iy + 1) * w];
                        let gxrow = &mut gxin[iy * w..(iy + 1) * w];
                        for ox in ox_lo..ox_hi {
                            let ix = ox * stride + kx - pad;
                            acc += grow[ox] * xrow[ix];
                            gxrow[ix] += wv * grow[ox];
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    Ok(gin)
}
