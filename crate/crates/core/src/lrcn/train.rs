use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::augment_train;
use super::model::{LrcnGrads, LrcnModel};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::scalar::Scalar;
use crate::tensor::dropout::Mode;
use crate::tensor::optim::Sgd;

/// Source-size frames of one training video with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrames {
    pub frames: Vec<Frame>,
    pub label: u8,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub losses: Vec<f64>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{},{l}\n", i + 1));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::at_path(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::at_path(path, e))
    }

    /// Mean of the first and last `window` losses.
    pub fn head_tail_means(&self, window: usize) -> (f64, f64) {
        let w = window.min(self.losses.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (mean(&self.losses[..w.min(self.losses.len())]), mean(&self.losses[self.losses.len().saturating_sub(w)..]))
    }
}

fn class_ratio(samples: &[LabeledFrames]) -> f64 {
    samples.iter().filter(|s| s.label == 1).count() as f64 / samples.len() as f64
}

fn validate_samples<S: Scalar>(model: &LrcnModel<S>, samples: &[LabeledFrames]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let src = model.config().source_frame_size;
    if src.channels != 3 {
        return Err(Error::config("frame training needs 3-channel input"));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.label > 1 {
            return Err(Error::invalid(format!("sample {i}: label {} is not 0 or 1", s.label)));
        }
        if s.frames.is_empty() {
            return Err(Error::invalid(format!("sample {i} has no frames")));
        }
        if let Some(f) = s.frames.iter().find(|f| f.width() != src.width || f.height() != src.height) {
            return Err(Error::shape(format!(
                "sample {i}: frame {}x{} differs from source size {}x{}",
                f.height(),
                f.width(),
                src.height,
                src.width
            )));
        }
    }
    Ok(())
}

/// Runs `config.total_iterations()` SGD steps. Each batch element gets its own
/// seed from the master generator, so results do not depend on thread count.
pub fn train<S: Scalar>(model: &mut LrcnModel<S>, samples: &[LabeledFrames]) -> Result<LossCurve> {
    train_with(model, samples, |_, _| {})
}

/// As [`train`], calling `progress(iteration, loss)` after every step.
pub fn train_with<S: Scalar>(
    model: &mut LrcnModel<S>,
    samples: &[LabeledFrames],
    mut progress: impl FnMut(usize, f64),
) -> Result<LossCurve> {
    validate_samples(model, samples)?;
    let ratio = class_ratio(samples);
    if !(0.4..=0.6).contains(&ratio) {
        log::warn!("training set is unbalanced: {:.1}% popular", ratio * 100.0);
    }
    let cfg = model.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut sgd = Sgd::<S>::new(cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let mut curve = LossCurve::default();
    let inv_batch = S::one() / S::of(cfg.batch_size as f64);

    for iter in 0..cfg.total_iterations() {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push((order[cursor], rng.random::<u64>()));
            cursor += 1;
        }
        let frozen = &*model;
        let results: Vec<Result<(S, LrcnGrads<S>)>> = batch
            .par_iter()
            .map(|&(idx, seed)| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let s = &samples[idx];
                let (cropped, _) = augment_train(&s.frames, cfg.input_crop, &mut r)?;
                let tensors = frozen.input_tensors(&cropped);
                let mut g = frozen.zero_grads();
                let l = frozen.loss_and_grad(&tensors, s.label, Mode::Train, &mut r, &mut g)?;
                Ok((l, g))
            })
            .collect();
        let mut total = model.zero_grads();
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l.to_f64_lossy();
            total.add_assign(&g);
        }
        loss /= cfg.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at iteration {}", iter + 1)));
        }
        total.scale(inv_batch);
        if let Some(clip) = cfg.clip_gradients {
            let norm = total.norm();
            if norm > clip {
                total.scale(S::of(clip / norm));
            }
        }
        model.accumulate(&total);
        sgd.step(&mut model.blocks_mut())
            .map_err(|e| Error::NonFinite(format!("iteration {}: {e}", iter + 1)))?;
        curve.losses.push(loss);
        progress(iter + 1, loss);
    }
    Ok(curve)
}
