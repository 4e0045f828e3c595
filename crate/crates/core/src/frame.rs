//! 8-bit RGB frames and binary PPM (P6) I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One RGB video frame, interleaved row-major, 8 bits per channel.
/// Channel values map to `[0, 1]` as `v / 255`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("frame must be non-empty, got {width}x{height}")));
        }
        if rgb.len() != width * height * 3 {
            return Err(Error::shape(format!(
                "{width}x{height} RGB frame needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        Ok(Self { width, height, rgb })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame must be non-empty");
        let mut rgb = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                rgb.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, rgb }
    }

    pub fn filled(width: usize, height: usize, px: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| px)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Frame> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::shape(format!(
                "crop {height}x{width} at ({top},{left}) exceeds {}x{} frame",
                self.height, self.width
            )));
        }
        let mut rgb = Vec::with_capacity(width * height * 3);
        for y in top..top + height {
            let start = (y * self.width + left) * 3;
            rgb.extend_from_slice(&self.rgb[start..start + width * 3]);
        }
        Ok(Frame { width, height, rgb })
    }

    /// Left-right flip.
    pub fn mirror(&self) -> Frame {
        let mut rgb = Vec::with_capacity(self.rgb.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let i = (y * self.width + x) * 3;
                rgb.extend_from_slice(&self.rgb[i..i + 3]);
            }
        }
        Frame {
            width: self.width,
            height: self.height,
            rgb,
        }
    }

    /// `[3, H, W]` tensor with values in `[0, 1]`.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let plane = self.width * self.height;
        let inv = S::of(1.0 / 255.0);
        let mut t = Tensor::zeros(&[3, self.height, self.width]);
        let d = t.data_mut();
        for (i, px) in self.rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                d[c * plane + i] = S::of(px[c] as f64) * inv;
            }
        }
        t
    }

    /// Row-major values of one channel in `[0, 1]`.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.rgb.chunks_exact(3).map(|px| px[c] as f64 / 255.0).collect()
    }

    /// Row-major luma `0.299 R + 0.587 G + 0.114 B` in `[0, 1]`.
    pub fn luma(&self) -> Vec<f64> {
        self.rgb
            .chunks_exact(3)
            .map(|px| (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64) / 255.0)
            .collect()
    }

    /// Mean over all pixels and channels, in `[0, 1]`.
    pub fn mean_brightness(&self) -> f64 {
        self.rgb.iter().map(|&v| v as u64).sum::<u64>() as f64 / (self.rgb.len() as f64 * 255.0)
    }
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.rgb);
    out
}

fn skip_space_and_comments(data: &[u8], pos: &mut usize) {
    while *pos < data.len() {
        match data[*pos] {
            b'#' => {
                while *pos < data.len() && data[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

fn header_number(data: &[u8], pos: &mut usize) -> Result<usize> {
    skip_space_and_comments(data, pos);
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("PPM header: expected a number at byte {start}")))
}

pub fn decode_ppm(data: &[u8]) -> Result<Frame> {
    if data.len() < 2 || &data[..2] != b"P6" {
        return Err(Error::Format("not a binary PPM (missing P6 magic)".into()));
    }
    let mut pos = 2;
    let width = header_number(data, &mut pos)?;
    let height = header_number(data, &mut pos)?;
    let maxval = header_number(data, &mut pos)?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {maxval} (only 255)")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::Format("PPM header not terminated by whitespace".into()));
    }
    pos += 1;
    let need = width * height * 3;
    if data.len() - pos != need {
        return Err(Error::Format(format!(
            "PPM raster has {} bytes, expected {need}",
            data.len() - pos
        )));
    }
    Frame::new(width, height, data[pos..].to_vec())
}

pub fn read_ppm(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::at_path(path, e))?;
    decode_ppm(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_ppm(path: &Path, frame: &Frame) -> Result<()> {
    fs::write(path, encode_ppm(frame)).map_err(|e| Error::at_path(path, e))
}
