//! Histogram of oriented gradients.

use serde::{Deserialize, Serialize};

use super::resize::{resize_bilinear, Plane};
use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    /// `(height, width)` the luma image is resampled to.
    pub resize_to: (usize, usize),
    pub cell: usize,
    pub block: usize,
    pub block_stride: usize,
    pub bins: usize,
    pub signed: bool,
    pub epsilon: f64,
}

impl Default for HogConfig {
    /// 128x128, 8 px cells, 2x2 blocks at stride 1, 9 unsigned bins: 8100 values.
    fn default() -> Self {
        Self {
            resize_to: (128, 128),
            cell: 8,
            block: 2,
            block_stride: 1,
            bins: 9,
            signed: false,
            epsilon: 1e-3,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.resize_to;
        if h == 0 || w == 0 {
            return Err(Error::config(format!("degenerate HOG resize target {h}x{w}")));
        }
        if self.cell == 0 || self.block == 0 || self.block_stride == 0 || self.bins == 0 {
            return Err(Error::config("HOG cell, block, stride and bins must be positive"));
        }
        if h / self.cell < self.block || w / self.cell < self.block {
            return Err(Error::config(format!(
                "HOG block of {} cells does not fit a {h}x{w} image with {} px cells",
                self.block, self.cell
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("HOG epsilon must be positive"));
        }
        Ok(())
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.resize_to.0 / self.cell, self.resize_to.1 / self.cell)
    }

    pub fn blocks(&self) -> (usize, usize) {
        let (cy, cx) = self.cells();
        (
            (cy - self.block) / self.block_stride + 1,
            (cx - self.block) / self.block_stride + 1,
        )
    }

    pub fn dim(&self) -> usize {
        let (by, bx) = self.blocks();
        by * bx * self.block * self.block * self.bins
    }
}

/// Unnormalised per-cell histograms, `[cells_y][cells_x][bins]` flattened.
/// Pixels past the last whole cell are ignored.
pub fn cell_histograms(image: &Frame, cfg: &HogConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (h, w) = cfg.resize_to;
    let luma = Plane::new(image.width(), image.height(), image.luma());
    let p = resize_bilinear(&luma, w, h)?;
    let (cy, cx) = cfg.cells();
    let bins = cfg.bins;
    let range = if cfg.signed { 360.0 } else { 180.0 };
    let width = range / bins as f64;
    let mut hist = vec![0.0; cy * cx * bins];
    for y in 0..cy * cfg.cell {
        for x in 0..cx * cfg.cell {
            let gx = p.at((x + 1).min(w - 1), y) - p.at(x.saturating_sub(1), y);
            let gy = p.at(x, (y + 1).min(h - 1)) - p.at(x, y.saturating_sub(1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).to_degrees().rem_euclid(range);
            // bin k is centred at k * width; split the vote between the two nearest centres
            let pos = angle / width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as usize) % bins;
            let b1 = (b0 + 1) % bins;
            let base = ((y / cfg.cell) * cx + x / cfg.cell) * bins;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + b1] += mag * frac;
        }
    }
    Ok(hist)
}

/// Block-normalised descriptor of length [`HogConfig::dim`]. Each block is
/// scaled by `1 / sqrt(|v|^2 + eps^2)`.
pub fn hog(image: &Frame, cfg: &HogConfig) -> Result<Vec<f64>> {
    let cells = cell_histograms(image, cfg)?;
    let (_, cx) = cfg.cells();
    let (by, bx) = cfg.blocks();
    let bins = cfg.bins;
    let mut out = Vec::with_capacity(cfg.dim());
    let mut block = Vec::with_capacity(cfg.block * cfg.block * bins);
    for j in 0..by {
        for i in 0..bx {
            block.clear();
            for dy in 0..cfg.block {
                for dx in 0..cfg.block {
                    let c = (j * cfg.block_stride + dy) * cx + i * cfg.block_stride + dx;
                    block.extend_from_slice(&cells[c * bins..(c + 1) * bins]);
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + cfg.epsilon * cfg.epsilon).sqrt();
            out.extend(block.iter().map(|v| v / norm));
        }
    }
    Ok(out)
}
