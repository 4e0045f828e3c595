use serde::{Deserialize, Serialize};

use crate::canon::{canonical_json, short_hash};
use crate::error::{Error, Result};
use crate::tensor::conv::conv_output_len;
use crate::tensor::dropout::check_ratio;
use crate::tensor::loss::LossKind;
use crate::tensor::lrn::LrnParams;
use crate::tensor::pool::pool_output_len;

/// Number of convolutional layers in the stack.
pub const CONV_LAYERS: usize = 5;
/// Output classes: unpopular, popular.
pub const CLASSES: usize = 2;
/// Conv layers (0-based) followed by max pooling.
pub const POOL_AFTER: [usize; 3] = [0, 1, 4];
/// Conv layers (0-based) whose pooled output goes through LRN.
pub const LRN_AFTER: [usize; 2] = [0, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FrameShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayerSpec {
    pub const fn new(filters: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            filters,
            kernel,
            stride,
            pad,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrcnConfig {
    pub frames_per_video: usize,
    pub input_crop: FrameShape,
    pub source_frame_size: FrameShape,
    pub conv: Vec<ConvLayerSpec>,
    pub pool: PoolSpec,
    pub lrn: LrnParams,
    /// Subtracted from every input value (pixels are scaled to `[0, 1]`).
    #[serde(default)]
    pub input_mean: f64,
    pub fc1_width: usize,
    pub lstm_hidden: usize,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub lr: f64,
    pub momentum: f64,
    pub dropout_fc1: f64,
    pub dropout_lstm: f64,
    /// Rescales the batch gradient when its global L2 norm exceeds this.
    #[serde(default)]
    pub clip_gradients: Option<f64>,
    pub seed: u64,
}

impl LrcnConfig {
    /// Full-size network: 18 frames of 227x227x3 cropped from 320x240
    /// sources, CaffeNet-style convolutions, 4096-wide fc1, 12 epochs of
    /// 30'000 iterations at batch size 12.
    pub fn paper() -> Self {
        Self {
            frames_per_video: 18,
            input_crop: FrameShape::new(227, 227, 3),
            source_frame_size: FrameShape::new(240, 320, 3),
            conv: vec![
                ConvLayerSpec::new(96, 11, 4, 0),
                ConvLayerSpec::new(256, 5, 1, 2),
                ConvLayerSpec::new(384, 3, 1, 1),
                ConvLayerSpec::new(384, 3, 1, 1),
                ConvLayerSpec::new(256, 3, 1, 1),
            ],
            pool: PoolSpec { kernel: 3, stride: 2 },
            lrn: LrnParams::default(),
            input_mean: 0.5,
            fc1_width: 4096,
            lstm_hidden: 256,
            epochs: 12,
            iterations_per_epoch: 30_000,
            batch_size: 12,
            loss: LossKind::CrossEntropy,
            lr: 1e-3,
            momentum: 0.9,
            dropout_fc1: 0.9,
            dropout_lstm: 0.5,
            clip_gradients: None,
            seed: 0,
        }
    }

    /// Desk-scale network used by tests and the acceptance experiments.
    pub fn mini() -> Self {
        Self {
            frames_per_video: 6,
            input_crop: FrameShape::new(32, 32, 3),
            source_frame_size: FrameShape::new(40, 40, 3),
            conv: vec![ConvLayerSpec::new(8, 3, 1, 1); CONV_LAYERS],
            pool: PoolSpec { kernel: 2, stride: 2 },
            lrn: LrnParams::default(),
            input_mean: 0.5,
            fc1_width: 32,
            lstm_hidden: 16,
            epochs: 12,
            iterations_per_epoch: 100,
            batch_size: 12,
            loss: LossKind::CrossEntropy,
            lr: 2e-2,
            momentum: 0.9,
            dropout_fc1: 0.2,
            dropout_lstm: 0.2,
            clip_gradients: Some(1.0),
            seed: 0,
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iterations_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv.len() != CONV_LAYERS {
            return Err(Error::config(format!(
                "conv stack must have {CONV_LAYERS} entries, got {}",
                self.conv.len()
            )));
        }
        for (name, v) in [
            ("frames_per_video", self.frames_per_video),
            ("fc1_width", self.fc1_width),
            ("lstm_hidden", self.lstm_hidden),
            ("batch_size", self.batch_size),
            ("input_crop.channels", self.input_crop.channels),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.source_frame_size.channels != self.input_crop.channels {
            return Err(Error::config("source and crop channel counts differ"));
        }
        if self.source_frame_size.height < self.input_crop.height
            || self.source_frame_size.width < self.input_crop.width
        {
            return Err(Error::config(format!(
                "source frame {}x{} is smaller than crop {}x{}",
                self.source_frame_size.height,
                self.source_frame_size.width,
                self.input_crop.height,
                self.input_crop.width
            )));
        }
        check_ratio(self.dropout_fc1).map_err(|e| Error::config(format!("dropout_fc1: {e}")))?;
        check_ratio(self.dropout_lstm).map_err(|e| Error::config(format!("dropout_lstm: {e}")))?;
        if !self.input_mean.is_finite() {
            return Err(Error::config("input_mean must be finite"));
        }
        self.lrn.validate().map_err(|e| Error::config(format!("lrn: {e}")))?;
        if !(self.lr >= 0.0) || !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::config("lr must be >= 0 and momentum in [0, 1)"));
        }
        if let Some(c) = self.clip_gradients {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config(format!("clip_gradients must be positive, got {c}")));
            }
        }
        self.layer_shapes()?;
        Ok(())
    }

    /// Output shape after each stage of the convolutional stack, ending
    /// with the fc1 input width.
    pub fn layer_shapes(&self) -> Result<Vec<(String, [usize; 3])>> {
        let mut shape = [
            self.input_crop.channels,
            self.input_crop.height,
            self.input_crop.width,
        ];
        let mut out = Vec::new();
        for (i, spec) in self.conv.iter().enumerate() {
            let name = format!("conv{}", i + 1);
            let fail = |e: Error| Error::config(format!("{name}: {e}"));
            if spec.filters == 0 {
                return Err(Error::config(format!("{name}: zero filters")));
            }
            let h = conv_output_len(shape[1], spec.kernel, spec.stride, spec.pad).map_err(fail)?;
            let w = conv_output_len(shape[2], spec.kernel, spec.stride, spec.pad).map_err(fail)?;
            shape = [spec.filters, h, w];
            out.push((name, shape));
            if POOL_AFTER.contains(&i) {
                let name = format!("pool{}", i + 1);
                let fail = |e: Error| Error::config(format!("{name}: {e}"));
                let h = pool_output_len(shape[1], self.pool.kernel, self.pool.stride).map_err(fail)?;
                let w = pool_output_len(shape[2], self.pool.kernel, self.pool.stride).map_err(fail)?;
                shape = [shape[0], h, w];
                out.push((name, shape));
            }
        }
        Ok(out)
    }

    pub fn fc1_input_dim(&self) -> Result<usize> {
        let shapes = self.layer_shapes()?;
        let last = shapes.last().expect("five conv layers").1;
        Ok(last.iter().product())
    }

    /// Compact JSON with lexicographically sorted keys.
    pub fn canonical_json(&self) -> String {
        canonical_json(self)
    }

    pub fn config_hash(&self) -> String {
        short_hash(&self.canonical_json())
    }
}
