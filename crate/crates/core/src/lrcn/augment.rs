//! Random-crop/mirror training augmentation and 10-crop test-time views.

use rand::Rng;

use super::config::FrameShape;
use crate::error::{Error, Result};
use crate::frame::Frame;

/// One crop offset and mirror flag, applied identically to every frame of a video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CropPlan {
    pub top: usize,
    pub left: usize,
    pub mirror: bool,
}

fn slack(frame: &Frame, crop: FrameShape) -> Result<(usize, usize)> {
    if frame.height() < crop.height || frame.width() < crop.width {
        return Err(Error::shape(format!(
            "source {}x{} is smaller than crop {}x{}",
            frame.height(),
            frame.width(),
            crop.height,
            crop.width
        )));
    }
    Ok((frame.height() - crop.height, frame.width() - crop.width))
}

impl CropPlan {
    /// Uniform offset in each axis (top first), then a fair-coin mirror.
    pub fn random<R: Rng + ?Sized>(source: &Frame, crop: FrameShape, rng: &mut R) -> Result<Self> {
        let (dh, dw) = slack(source, crop)?;
        let top = rng.random_range(0..=dh);
        let left = rng.random_range(0..=dw);
        let mirror = rng.random_bool(0.5);
        Ok(Self { top, left, mirror })
    }

    pub fn apply(&self, frame: &Frame, crop: FrameShape) -> Result<Frame> {
        let c = frame.crop(self.top, self.left, crop.height, crop.width)?;
        Ok(if self.mirror { c.mirror() } else { c })
    }

    pub fn apply_all(&self, frames: &[Frame], crop: FrameShape) -> Result<Vec<Frame>> {
        frames.iter().map(|f| self.apply(f, crop)).collect()
    }
}

/// Draws one plan for the whole video and crops every frame with it.
pub fn augment_train<R: Rng + ?Sized>(
    frames: &[Frame],
    crop: FrameShape,
    rng: &mut R,
) -> Result<(Vec<Frame>, CropPlan)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("cannot augment an empty frame sequence"))?;
    let plan = CropPlan::random(first, crop, rng)?;
    Ok((plan.apply_all(frames, crop)?, plan))
}

/// The ten test-time plans: TL, TR, BL, BR, center, then the same five mirrored.
pub fn tta_plans(source: &Frame, crop: FrameShape) -> Result<Vec<CropPlan>> {
    let (dh, dw) = slack(source, crop)?;
    let anchors = [(0, 0), (0, dw), (dh, 0), (dh, dw), (dh / 2, dw / 2)];
    Ok([false, true]
        .iter()
        .flat_map(|&mirror| anchors.iter().map(move |&(top, left)| CropPlan { top, left, mirror }))
        .collect())
}

pub fn tta_crops(frames: &[Frame], crop: FrameShape) -> Result<Vec<Vec<Frame>>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("cannot crop an empty frame sequence"))?;
    tta_plans(first, crop)?
        .iter()
        .map(|p| p.apply_all(frames, crop))
        .collect()
}
