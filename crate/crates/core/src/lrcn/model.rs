//! The recurrent convolutional network.
//!
//! Per frame: conv1-relu-pool-lrn, conv2-relu-pool-lrn, conv3-relu,
//! conv4-relu, conv5-relu-pool, fc1-relu-dropout, then one LSTM step
//! (state carried from the previous frame), dropout, fc2 and softmax. The
//! video-level output is the mean of the per-frame probability vectors.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{LrcnConfig, CLASSES, LRN_AFTER, POOL_AFTER};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::scalar::{DType, Scalar};
use crate::tensor::activation::{relu, relu_backward, softmax, softmax_backward};
use crate::tensor::checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
use crate::tensor::conv::{conv2d, conv2d_backward, ConvGeometry};
use crate::tensor::dense::{dense, dense_backward};
use crate::tensor::dropout::{dropout, dropout_backward, Mode};
use crate::tensor::gradcheck::GradTarget;
use crate::tensor::loss::{loss, loss_grad};
use crate::tensor::lrn::{lrn_backward, lrn_cached};
use crate::tensor::lstm::{lstm_step_backward, lstm_step_cached, LstmCache, LstmState};
use crate::tensor::pool::{maxpool2d_backward, maxpool2d_indexed};
use crate::tensor::{LayerParams, ParamGrad, Tensor};

/// Two-class output: `probs = [p(unpopular), p(popular)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopularityPrediction {
    pub probs: [f64; 2],
    pub label: u8,
}

impl PopularityPrediction {
    /// Label is the argmax with ties going to popular.
    pub fn from_probs(probs: [f64; 2]) -> Self {
        let label = if probs[1] >= probs[0] { 1 } else { 0 };
        Self { probs, label }
    }

    pub fn popular(&self) -> f64 {
        self.probs[1]
    }
}

#[derive(Clone, Copy, Debug)]
enum Stage {
    Conv(usize),
    Relu,
    Pool,
    Lrn,
}

fn plan() -> Vec<Stage> {
    let mut p = Vec::new();
    for i in 0..super::config::CONV_LAYERS {
        p.push(Stage::Conv(i));
        p.push(Stage::Relu);
        if POOL_AFTER.contains(&i) {
            p.push(Stage::Pool);
            if LRN_AFTER.contains(&i) {
                p.push(Stage::Lrn);
            }
        }
    }
    p
}

enum StageCache<S> {
    None,
    Pool(Vec<usize>),
    Lrn(Tensor<S>),
}

struct FrameTrace<S> {
    stage_inputs: Vec<Tensor<S>>,
    stage_caches: Vec<StageCache<S>>,
    cnn_shape: Vec<usize>,
    fc1_in: Tensor<S>,
    fc1_pre: Tensor<S>,
    fc1_mask: Option<Tensor<S>>,
    lstm: Option<LstmCache<S>>,
    lstm_mask: Option<Tensor<S>>,
    fc2_in: Tensor<S>,
    probs: Tensor<S>,
}

/// Gradient buffers for every parameter block, in [`LrcnModel::blocks`] order.
#[derive(Clone, Debug)]
pub struct LrcnGrads<S> {
    pub blocks: Vec<ParamGrad<S>>,
}

impl<S: Scalar> LrcnGrads<S> {
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: S) {
        self.blocks.iter_mut().for_each(|g| g.scale(factor));
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|g| g.weight.data().iter().chain(g.bias.data()))
            .map(|&v| {
                let v = v.to_f64_lossy();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn flatten(&self) -> Vec<S> {
        let mut v = Vec::new();
        for g in &self.blocks {
            v.extend_from_slice(g.weight.data());
            v.extend_from_slice(g.bias.data());
        }
        v
    }
}

/// Names of the eight learnable layers, in parameter-block order.
pub const LAYER_NAMES: [&str; 8] = ["conv1", "conv2", "conv3", "conv4", "conv5", "fc1", "lstm", "fc2"];

#[derive(Clone, Debug, PartialEq)]
pub struct LrcnModel<S> {
    config: LrcnConfig,
    pub conv: Vec<LayerParams<S>>,
    pub fc1: LayerParams<S>,
    pub lstm: LayerParams<S>,
    pub fc2: LayerParams<S>,
    lstm_bypass: bool,
}

/// Conv layers (0-based) whose biases start at 0.1 rather than 0.
const POSITIVE_BIAS: [usize; 3] = [1, 3, 4];

fn he_normal<S: Scalar>(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor<S> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| S::of(normal.sample(rng)))
}

impl<S: Scalar> LrcnModel<S> {
    /// He-normal weights; biases 0.1 on conv2, conv4, conv5 and fc1, else 0; LSTM forget-gate bias 1.
    pub fn build(config: LrcnConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut conv = Vec::with_capacity(config.conv.len());
        let mut channels = config.input_crop.channels;
        for (i, spec) in config.conv.iter().enumerate() {
            let fan_in = channels * spec.kernel * spec.kernel;
            let w = he_normal(rng, &[spec.filters, channels, spec.kernel, spec.kernel], fan_in);
            let b = if POSITIVE_BIAS.contains(&i) { 0.1 } else { 0.0 };
            conv.push(LayerParams::new(w, Tensor::full(&[spec.filters], S::of(b))));
            channels = spec.filters;
        }
        let d = config.fc1_input_dim()?;
        let f = config.fc1_width;
        let h = config.lstm_hidden;
        let fc1 = LayerParams::new(he_normal(rng, &[f, d], d), Tensor::full(&[f], S::of(0.1)));
        let mut lstm_bias = Tensor::zeros(&[4 * h]);
        lstm_bias.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = S::one());
        let lstm = LayerParams::new(he_normal(rng, &[4 * h, f + h], f + h), lstm_bias);
        let fc2 = LayerParams::new(he_normal(rng, &[CLASSES, h], h), Tensor::zeros(&[CLASSES]));
        Ok(Self {
            config,
            conv,
            fc1,
            lstm,
            fc2,
            lstm_bypass: false,
        })
    }

    /// Seeds a ChaCha generator from `config.seed`.
    pub fn from_config(config: LrcnConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::build(config, &mut rng)
    }

    pub fn config(&self) -> &LrcnConfig {
        &self.config
    }

    /// Network input for each frame: `[3, H, W]` with `input_mean` subtracted.
    pub fn input_tensors(&self, frames: &[Frame]) -> Vec<Tensor<S>> {
        let mean = S::of(self.config.input_mean);
        frames
            .iter()
            .map(|f| {
                let mut t = f.to_tensor::<S>();
                t.data_mut().iter_mut().for_each(|v| *v -= mean);
                t
            })
            .collect()
    }

    /// Diagnostic mode: the LSTM is replaced by an identity passthrough, so
    /// every frame is classified independently. Requires `lstm_hidden == fc1_width`.
    pub fn set_lstm_bypass(&mut self, bypass: bool) -> Result<()> {
        if bypass && self.config.lstm_hidden != self.config.fc1_width {
            return Err(Error::config(
                "LSTM bypass needs lstm_hidden == fc1_width so fc2 can read fc1 directly",
            ));
        }
        self.lstm_bypass = bypass;
        Ok(())
    }

    pub fn blocks(&self) -> Vec<&LayerParams<S>> {
        let mut v: Vec<&LayerParams<S>> = self.conv.iter().collect();
        v.extend([&self.fc1, &self.lstm, &self.fc2]);
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut LayerParams<S>> {
        let mut v: Vec<&mut LayerParams<S>> = self.conv.iter_mut().collect();
        v.extend([&mut self.fc1, &mut self.lstm, &mut self.fc2]);
        v
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.num_params()).sum()
    }

    pub fn zero_grads(&self) -> LrcnGrads<S> {
        LrcnGrads {
            blocks: self.blocks().into_iter().map(ParamGrad::zeros_like).collect(),
        }
    }

    /// Adds `grads` into the models' own gradient accumulators.
    pub fn accumulate(&mut self, grads: &LrcnGrads<S>) {
        for (block, g) in self.blocks_mut().into_iter().zip(&grads.blocks) {
            block.grad.add_assign(g);
        }
    }

    pub fn params_flat(&self) -> Vec<S> {
        let mut v = Vec::with_capacity(self.num_params());
        for b in self.blocks() {
            v.extend_from_slice(b.weight.data());
            v.extend_from_slice(b.bias.data());
        }
        v
    }

    pub fn set_params_flat(&mut self, values: &[S]) {
        let mut off = 0;
        for b in self.blocks_mut() {
            for t in [&mut b.weight, &mut b.bias] {
                let n = t.len();
                t.data_mut().copy_from_slice(&values[off..off + n]);
                off += n;
            }
        }
        assert_eq!(off, values.len(), "parameter count mismatch");
    }

    fn geometry(&self, i: usize) -> ConvGeometry {
        let s = &self.config.conv[i];
        ConvGeometry::new(s.stride, s.pad)
    }

    fn check_frame(&self, frame: &Tensor<S>) -> Result<()> {
        let c = &self.config.input_crop;
        if frame.shape() != [c.channels, c.height, c.width] {
            return Err(Error::shape(format!(
                "frame {:?} does not match input crop [{}, {}, {}]",
                frame.shape(),
                c.channels,
                c.height,
                c.width
            )));
        }
        Ok(())
    }

    fn forward_frame<R: Rng + ?Sized>(
        &self,
        frame: &Tensor<S>,
        state: &LstmState<S>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(LstmState<S>, FrameTrace<S>)> {
        self.check_frame(frame)?;
        let mut x = frame.clone();
        let stages = plan();
        let mut stage_inputs = Vec::with_capacity(stages.len());
        let mut stage_caches = Vec::with_capacity(stages.len());
        for stage in &stages {
            let (y, cache) = match *stage {
                Stage::Conv(i) => (conv2d(&x, &self.conv[i], self.geometry(i))?, StageCache::None),
                Stage::Relu => (relu(&x), StageCache::None),
                Stage::Pool => {
                    let p = maxpool2d_indexed(&x, self.config.pool.kernel, self.config.pool.stride)?;
                    (p.output, StageCache::Pool(p.argmax))
                }
                Stage::Lrn => {
                    let n = lrn_cached(&x, &self.config.lrn)?;
                    (n.output, StageCache::Lrn(n.denom))
                }
            };
            stage_inputs.push(std::mem::replace(&mut x, y));
            stage_caches.push(cache);
        }
        let cnn_shape = x.shape().to_vec();
        let fc1_in = x.flatten();
        let fc1_pre = dense(&fc1_in, &self.fc1)?;
        let d1 = dropout(&relu(&fc1_pre), self.config.dropout_fc1, mode, rng)?;
        let (next, lstm_cache, hidden) = if self.lstm_bypass {
            (state.clone(), None, d1.output)
        } else {
            let (next, cache) = lstm_step_cached(&d1.output, state, &self.lstm)?;
            let h = next.hidden.clone();
            (next, Some(cache), h)
        };
        let d2 = dropout(&hidden, self.config.dropout_lstm, mode, rng)?;
        let logits = dense(&d2.output, &self.fc2)?;
        let probs = softmax(&logits);
        Ok((
            next,
            FrameTrace {
                stage_inputs,
                stage_caches,
                cnn_shape,
                fc1_in,
                fc1_pre,
                fc1_mask: d1.mask,
                lstm: lstm_cache,
                lstm_mask: d2.mask,
                fc2_in: d2.output,
                probs,
            },
        ))
    }

    fn forward_traced<R: Rng + ?Sized>(
        &self,
        frames: &[Tensor<S>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor<S>, Vec<FrameTrace<S>>)> {
        if frames.is_empty() {
            return Err(Error::invalid("cannot classify an empty frame sequence"));
        }
        let mut state = LstmState::zeros(self.config.lstm_hidden);
        let mut traces = Vec::with_capacity(frames.len());
        let mut avg = Tensor::zeros(&[CLASSES]);
        for frame in frames {
            let (next, trace) = self.forward_frame(frame, &state, mode, rng)?;
            avg.add_assign(&trace.probs);
            traces.push(trace);
            state = next;
        }
        avg.scale(S::one() / S::of(frames.len() as f64));
        Ok((avg, traces))
    }

    /// Per-frame probability vectors; the video output is their mean.
    pub fn frame_probs(&self, frames: &[Tensor<S>]) -> Result<Vec<[f64; 2]>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, traces) = self.forward_traced(frames, Mode::Eval, &mut rng)?;
        Ok(traces
            .iter()
            .map(|t| [t.probs.data()[0].to_f64_lossy(), t.probs.data()[1].to_f64_lossy()])
            .collect())
    }

    /// Sequential forward pass with the LSTM state starting at zero.
    pub fn forward_video<R: Rng + ?Sized>(
        &self,
        frames: &[Tensor<S>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<PopularityPrediction> {
        let (avg, _) = self.forward_traced(frames, mode, rng)?;
        Ok(to_prediction(&avg))
    }

    /// Eval-mode forward pass (dropout is the identity, no randomness).
    pub fn forward_video_eval(&self, frames: &[Tensor<S>]) -> Result<PopularityPrediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward_video(frames, Mode::Eval, &mut rng)
    }

    /// Forward and backward pass for one labelled video. Gradients are added
    /// into `grads`; returns the loss of the frame-averaged probabilities.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        frames: &[Tensor<S>],
        label: u8,
        mode: Mode,
        rng: &mut R,
        grads: &mut LrcnGrads<S>,
    ) -> Result<S> {
        let (avg, traces) = self.forward_traced(frames, mode, rng)?;
        let l = loss(&avg, label, self.config.loss)?;
        let mut g_avg = loss_grad(&avg, label, self.config.loss)?;
        g_avg.scale(S::one() / S::of(frames.len() as f64));
        self.backward(&traces, &g_avg, grads)?;
        Ok(l)
    }

    /// Loss only, for finite differences.
    pub fn loss<R: Rng + ?Sized>(&self, frames: &[Tensor<S>], label: u8, mode: Mode, rng: &mut R) -> Result<S> {
        let (avg, _) = self.forward_traced(frames, mode, rng)?;
        loss(&avg, label, self.config.loss)
    }

    /// Backpropagation through time. `grad_probs` is the gradient reaching
    /// each frame's softmax output (the same for every frame).
    fn backward(&self, traces: &[FrameTrace<S>], grad_probs: &Tensor<S>, grads: &mut LrcnGrads<S>) -> Result<Vec<Tensor<S>>> {
        let h = self.config.lstm_hidden;
        let (conv_grads, rest) = grads.blocks.split_at_mut(5);
        let [g_fc1, g_lstm, g_fc2] = rest else {
            unreachable!("eight parameter blocks")
        };
        let mut dh_next = Tensor::zeros(&[h]);
        let mut dc_next = Tensor::zeros(&[h]);
        let mut input_grads = vec![Tensor::zeros(&[1]); traces.len()];
        let stages = plan();
        for (t, trace) in traces.iter().enumerate().rev() {
            let dlogits = softmax_backward(&trace.probs, grad_probs)?;
            let d_fc2_in = dense_backward(&trace.fc2_in, &self.fc2, &dlogits, g_fc2)?;
            let mut d_hidden = dropout_backward(trace.lstm_mask.as_ref(), &d_fc2_in);
            let d_fc1_out = match &trace.lstm {
                Some(cache) => {
                    d_hidden.add_assign(&dh_next);
                    let step = lstm_step_backward(cache, &self.lstm, &d_hidden, &dc_next, g_lstm)?;
                    dh_next = step.hidden;
                    dc_next = step.cell;
                    step.input
                }
                None => d_hidden,
            };
            let d_relu = dropout_backward(trace.fc1_mask.as_ref(), &d_fc1_out);
            let d_pre = relu_backward(&trace.fc1_pre, &d_relu)?;
            let d_flat = dense_backward(&trace.fc1_in, &self.fc1, &d_pre, g_fc1)?;
            let mut g = d_flat.reshape(trace.cnn_shape.clone())?;
            for (k, stage) in stages.iter().enumerate().rev() {
                let input = &trace.stage_inputs[k];
                g = match (*stage, &trace.stage_caches[k]) {
                    (Stage::Conv(i), _) => conv2d_backward(input, &self.conv[i], self.geometry(i), &g, &mut conv_grads[i])?,
                    (Stage::Relu, _) => relu_backward(input, &g)?,
                    (Stage::Pool, StageCache::Pool(argmax)) => maxpool2d_backward(input.shape(), argmax, &g)?,
                    (Stage::Lrn, StageCache::Lrn(denom)) => lrn_backward(input, denom, &self.config.lrn, &g)?,
                    _ => unreachable!("stage cache matches stage"),
                };
            }
            input_grads[t] = g;
        }
        Ok(input_grads)
    }

    /// Loss, parameter gradients, and per-frame input gradients.
    pub fn full_gradients<R: Rng + ?Sized>(
        &self,
        frames: &[Tensor<S>],
        label: u8,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(S, LrcnGrads<S>, Vec<Tensor<S>>)> {
        let (avg, traces) = self.forward_traced(frames, mode, rng)?;
        let l = loss(&avg, label, self.config.loss)?;
        let mut g_avg = loss_grad(&avg, label, self.config.loss)?;
        g_avg.scale(S::one() / S::of(frames.len() as f64));
        let mut grads = self.zero_grads();
        let inputs = self.backward(&traces, &g_avg, &mut grads)?;
        Ok((l, grads, inputs))
    }

    // ---- persistence --------------------------------------------------

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::new();
        for (name, block) in LAYER_NAMES.iter().zip(self.blocks()) {
            entries.push((format!("{name}.weight"), &block.weight));
            entries.push((format!("{name}.bias"), &block.bias));
        }
        encode_checkpoint(&self.config.canonical_json(), &entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::at_path(path, e))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: LrcnConfig = serde_json::from_str(&ckpt.header)
            .map_err(|e| Error::Format(format!("checkpoint header is not an LRCN config: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::build(config, &mut rng)?;
        for (name, block) in LAYER_NAMES.iter().zip(model.blocks_mut()) {
            for (suffix, t) in [("weight", &mut block.weight), ("bias", &mut block.bias)] {
                let key = format!("{name}.{suffix}");
                let stored = ckpt
                    .get(&key)
                    .ok_or_else(|| Error::Format(format!("checkpoint lacks '{key}'")))?;
                if stored.shape() != t.shape() {
                    return Err(Error::Format(format!(
                        "'{key}' has shape {:?}, config implies {:?}",
                        stored.shape(),
                        t.shape()
                    )));
                }
                *t = stored.to_scalar();
            }
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::at_path(path, e))?;
        Self::from_checkpoint(&decode_checkpoint(&bytes)?)
    }
}

fn to_prediction<S: Scalar>(avg: &Tensor<S>) -> PopularityPrediction {
    PopularityPrediction::from_probs([avg.data()[0].to_f64_lossy(), avg.data()[1].to_f64_lossy()])
}

/// A checkpoint loaded at its stored precision.
#[derive(Clone, Debug)]
pub enum AnyLrcn {
    Fast(LrcnModel<f32>),
    High(LrcnModel<f64>),
}

impl AnyLrcn {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::at_path(path, e))?;
        let ckpt = decode_checkpoint(&bytes)?;
        match ckpt.entries.first().map(|(_, t)| t.dtype()) {
            Some(DType::F64) => Ok(AnyLrcn::High(LrcnModel::from_checkpoint(&ckpt)?)),
            _ => Ok(AnyLrcn::Fast(LrcnModel::from_checkpoint(&ckpt)?)),
        }
    }

    pub fn config(&self) -> &LrcnConfig {
        match self {
            AnyLrcn::Fast(m) => m.config(),
            AnyLrcn::High(m) => m.config(),
        }
    }
}

/// Whole-network gradient check target. Variables are every parameter
/// followed by every input frame element; dropout masks are redrawn from
/// `seed` on each evaluation so the loss is a deterministic function.
pub struct LrcnGradTarget {
    pub model: LrcnModel<f64>,
    pub frames: Vec<Tensor<f64>>,
    pub label: u8,
    pub mode: Mode,
    pub seed: u64,
}

impl GradTarget for LrcnGradTarget {
    fn variables(&self) -> Vec<f64> {
        let mut v = self.model.params_flat();
        for f in &self.frames {
            v.extend_from_slice(f.data());
        }
        v
    }

    fn set_variables(&mut self, values: &[f64]) {
        let n = self.model.num_params();
        self.model.set_params_flat(&values[..n]);
        let mut off = n;
        for f in &mut self.frames {
            let len = f.len();
            f.data_mut().copy_from_slice(&values[off..off + len]);
            off += len;
        }
    }

    fn loss(&mut self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.model.loss(&self.frames, self.label, self.mode, &mut rng).expect("valid target")
    }

    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (l, grads, inputs) = self
            .model
            .full_gradients(&self.frames, self.label, self.mode, &mut rng)
            .expect("valid target");
        let mut v = grads.flatten();
        for g in &inputs {
            v.extend_from_slice(g.data());
        }
        (l, v)
    }
}
