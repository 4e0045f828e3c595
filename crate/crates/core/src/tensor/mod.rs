//! Dense tensor engine with the fixed layer vocabulary of the network.
//!
//! Every layer is a pair of free functions: a forward pass and a backward
//! pass that accumulates parameter gradients into a [`ParamGrad`] and
//! returns the gradient with respect to the layer input. There is no
//! general computation graph; the network wires the layers by hand.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod lrn;
pub mod lstm;
pub mod optim;
pub mod pool;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {expected} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Panics if any dimension is zero.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "dimensions must be positive, got {shape:?}"
        );
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        let n = data.len();
        Self::new(vec![n], data).expect("non-empty vector")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: tensors hold at least one element.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the tensor as `[C, H, W]`.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a [C,H,W] tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn flatten(self) -> Self {
        let n = self.data.len();
        Self {
            shape: vec![n],
            data: self.data,
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: S) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on unequal shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }
}

/// Gradient accumulators mirroring one [`LayerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> ParamGrad<S> {
    pub fn zeros_like(params: &LayerParams<S>) -> Self {
        Self {
            weight: Tensor::zeros(params.weight.shape()),
            bias: Tensor::zeros(params.bias.shape()),
        }
    }

    pub fn clear(&mut self) {
        self.weight.fill(S::zero());
        self.bias.fill(S::zero());
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.weight.add_assign(&other.weight);
        self.bias.add_assign(&other.bias);
    }

    pub fn scale(&mut self, factor: S) {
        self.weight.scale(factor);
        self.bias.scale(factor);
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.is_finite()
    }
}

/// Learnable weights and bias of one layer plus their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub grad: ParamGrad<S>,
}

impl<S: Scalar> LayerParams<S> {
    pub fn new(weight: Tensor<S>, bias: Tensor<S>) -> Self {
        let grad = ParamGrad {
            weight: Tensor::zeros(weight.shape()),
            bias: Tensor::zeros(bias.shape()),
        };
        Self { weight, bias, grad }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.clear();
    }

    pub fn cast<T: Scalar>(&self) -> LayerParams<T> {
        LayerParams {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            grad: ParamGrad {
                weight: self.grad.weight.cast(),
                bias: self.grad.bias.cast(),
            },
        }
    }
}
