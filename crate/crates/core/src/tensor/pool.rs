use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Max-pool result with the flat input index that won each window.
#[derive(Clone, Debug)]
pub struct Pooled<S> {
    pub output: Tensor<S>,
    pub argmax: Vec<usize>,
}

pub fn pool_output_len(input: usize, k: usize, stride: usize) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::invalid("pool window and stride must be positive"));
    }
    if k > input {
        return Err(Error::shape(format!(
            "pool window {k} exceeds input extent {input}"
        )));
    }
    Ok((input - k) / stride + 1)
}

pub fn maxpool2d<S: Scalar>(input: &Tensor<S>, k: usize, stride: usize) -> Result<Tensor<S>> {
    maxpool2d_indexed(input, k, stride).map(|p| p.output)
}

/// Ties resolve to the first maximum in row-major window order.
pub fn maxpool2d_indexed<S: Scalar>(input: &Tensor<S>, k: usize, stride: usize) -> Result<Pooled<S>> {
    let (c, h, w) = input.dims3()?;
    let ho = pool_output_len(h, k, stride)?;
    let wo = pool_output_len(w, k, stride)?;
    let x = input.data();
    let mut out = Tensor::zeros(&[c, ho, wo]);
    let mut argmax = Vec::with_capacity(c * ho * wo);
    let od = out.data_mut();
    let mut o = 0;
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = x[best_idx];
                for ky in 0..k {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for kx in 0..k {
                        let v = x[row + kx];
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                od[o] = best;
                argmax.push(best_idx);
                o += 1;
            }
        }
    }
    Ok(Pooled { output: out, argmax })
}

pub fn maxpool2d_backward<S: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(format!(
            "pool upstream gradient has {} elements, expected {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut gin = Tensor::zeros(input_shape);
    let gx = gin.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gx[idx] += g;
    }
    Ok(gin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_constant_output() {
        let x = Tensor::full(&[2, 6, 6], 0.25f64);
        let y = maxpool2d(&x, 3, 2).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn two_by_two_window() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0f64]).unwrap();
        assert_eq!(maxpool2d(&x, 2, 2).unwrap().data(), &[4.0]);
    }

    #[test]
    fn oversized_window_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 2, 5]);
        assert!(maxpool2d(&x, 3, 1).is_err());
    }

    #[test]
    fn ties_route_to_first_occurrence() {
        let x = Tensor::full(&[1, 2, 2], 1.0f64);
        let p = maxpool2d_indexed(&x, 2, 2).unwrap();
        assert_eq!(p.argmax, vec![0]);
        let g = maxpool2d_backward(x.shape(), &p.argmax, &Tensor::full(&[1, 1, 1], 5.0)).unwrap();
        assert_eq!(g.data(), &[5.0, 0.0, 0.0, 0.0]);
    }
}
