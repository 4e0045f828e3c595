mod binio;
pub mod canon;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod frame;
pub mod lrcn;
pub mod scalar;
pub mod shallow;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{DType, Precision, Scalar};
pub use tensor::{LayerParams, ParamGrad, Tensor};
pub use frame::Frame;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Lrcn32 = lrcn::LrcnModel<f32>;
pub type Lrcn64 = lrcn::LrcnModel<f64>;
