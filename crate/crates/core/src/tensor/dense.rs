use super::{LayerParams, ParamGrad, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn dims<S: Scalar>(input: &Tensor<S>, params: &LayerParams<S>) -> Result<(usize, usize)> {
    let (m, d) = match params.weight.shape()[..] {
        [m, d] => (m, d),
        _ => {
            return Err(Error::shape(format!(
                "dense weight must be [M,D], got {:?}",
                params.weight.shape()
            )))
        }
    };
    if input.len() != d {
        return Err(Error::shape(format!(
            "dense layer expects {d} inputs, got {} (shape {:?})",
            input.len(),
            input.shape()
        )));
    }
    if params.bias.len() != m {
        return Err(Error::shape(format!(
            "dense bias {:?} does not match {m} outputs",
            params.bias.shape()
        )));
    }
    Ok((m, d))
}

/// `W x + b`; the input is read as a flat vector of any shape.
pub fn dense<S: Scalar>(input: &Tensor<S>, params: &LayerParams<S>) -> Result<Tensor<S>> {
    let (m, d) = dims(input, params)?;
    let x = input.data();
    let w = params.weight.data();
    let b = params.bias.data();
    let out = (0..m)
        .map(|r| {
            let row = &w[r * d..(r + 1) * d];
            b[r] + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<S>()
        })
        .collect();
    Ok(Tensor::from_vec(out))
}

/// Returns the input gradient reshaped like `input`.
pub fn dense_backward<S: Scalar>(
    input: &Tensor<S>,
    params: &LayerParams<S>,
    grad_out: &Tensor<S>,
    grad: &mut ParamGrad<S>,
) -> Result<Tensor<S>> {
    let (m, d) = dims(input, params)?;
    if grad_out.len() != m {
        return Err(Error::shape(format!(
            "dense upstream gradient has {} elements, expected {m}",
            grad_out.len()
        )));
    }
    let x = input.data();
    let w = params.weight.data();
    let g = grad_out.data();
    let mut gin = Tensor::zeros(input.shape());
    let gx = gin.data_mut();
    let gw = grad.weight.data_mut();
    let gb = grad.bias.data_mut();
    for r in 0..m {
        let gr = g[r];
        gb[r] += gr;
        let row = &w[r * d..(r + 1) * d];
        let grow = &mut gw[r * d..(r + 1) * d];
        for j in 0..d {
            grow[j] += gr * x[j];
            gx[j] += gr * row[j];
        }
    }
    Ok(gin)
}
