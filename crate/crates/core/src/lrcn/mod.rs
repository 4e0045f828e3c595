//! Popularity-LRCN: a five-layer convolutional frame encoder feeding an LSTM.

pub mod augment;
pub mod config;
pub mod model;
pub mod train;

pub use augment::{augment_train, tta_crops, tta_plans, CropPlan};
pub use config::{ConvLayerSpec, FrameShape, LrcnConfig, PoolSpec};
pub use model::{AnyLrcn, LrcnGradTarget, LrcnGrads, LrcnModel, PopularityPrediction};
pub use train::{train, train_with, LabeledFrames, LossCurve};

use crate::error::Result;
use crate::frame::Frame;
use crate::scalar::Scalar;

/// Averages the eval-mode output over the ten test-time views.
pub fn predict<S: Scalar>(model: &LrcnModel<S>, frames: &[Frame]) -> Result<PopularityPrediction> {
    let views = tta_crops(frames, model.config().input_crop)?;
    let mut sum = [0.0; 2];
    for v in &views {
        let p = model.forward_video_eval(&model.input_tensors(v))?;
        sum[0] += p.probs[0];
        sum[1] += p.probs[1];
    }
    let n = views.len() as f64;
    Ok(PopularityPrediction::from_probs([sum[0] / n, sum[1] / n]))
}

impl AnyLrcn {
    pub fn predict(&self, frames: &[Frame]) -> Result<PopularityPrediction> {
        match self {
            AnyLrcn::Fast(m) => predict(m, frames),
            AnyLrcn::High(m) => predict(m, frames),
        }
    }
}
