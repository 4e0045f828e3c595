//! Colour GIST: pooled magnitudes of a log-polar Gabor filter bank.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::resize::{resize_bilinear, Plane};
use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GistConfig {
    /// `(height, width)` each channel is resampled to.
    pub resize_to: (usize, usize),
    pub grid: usize,
    pub scales: usize,
    pub orientations_per_scale: Vec<usize>,
    pub color: bool,
}

impl Default for GistConfig {
    /// 4 scales x 5 orientations pooled on a 4x4 grid over RGB: 960 values.
    fn default() -> Self {
        Self {
            resize_to: (128, 128),
            grid: 4,
            scales: 4,
            orientations_per_scale: vec![5; 4],
            color: true,
        }
    }
}

/// Radial bandwidth in natural-log frequency units.
const SIGMA_LOG_F: f64 = 0.55;
/// Centre frequency of the finest scale, cycles per pixel; halves per scale.
const TOP_FREQUENCY: f64 = 0.3;

impl GistConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.resize_to;
        if h == 0 || w == 0 {
            return Err(Error::config(format!("degenerate GIST resize target {h}x{w}")));
        }
        if self.grid == 0 || self.grid > h || self.grid > w {
            return Err(Error::config(format!("GIST grid {} does not fit a {h}x{w} image", self.grid)));
        }
        if self.scales == 0 || self.orientations_per_scale.len() != self.scales {
            return Err(Error::config(format!(
                "GIST needs one orientation count per scale ({} scales, {} counts)",
                self.scales,
                self.orientations_per_scale.len()
            )));
        }
        if self.orientations_per_scale.contains(&0) {
            return Err(Error::config("GIST orientation counts must be positive"));
        }
        Ok(())
    }

    pub fn filters(&self) -> usize {
        self.orientations_per_scale.iter().sum()
    }

    pub fn channels(&self) -> usize {
        if self.color {
            3
        } else {
            1
        }
    }

    pub fn dim(&self) -> usize {
        self.grid * self.grid * self.filters() * self.channels()
    }

    /// `(scale, orientation index, centre frequency, angle)` per filter, in output order.
    pub fn filter_specs(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut v = Vec::new();
        for (s, &n) in self.orientations_per_scale.iter().enumerate() {
            let f = TOP_FREQUENCY / 2f64.powi(s as i32);
            for k in 0..n {
                v.push((s, k, f, k as f64 * PI / n as f64));
            }
        }
        v
    }
}

/// Transfer function of one filter on the `h x w` DFT grid. Angles are
/// compared modulo pi so the filter is even and responses are real; the DC
/// and Nyquist lines are zeroed.
fn transfer(h: usize, w: usize, f0: f64, theta: f64, orientations: usize) -> Vec<f64> {
    let sigma_theta = 0.6 * PI / orientations as f64;
    let signed = |k: usize, n: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    let mut out = vec![0.0; h * w];
    for ky in 0..h {
        for kx in 0..w {
            let nyquist = (h % 2 == 0 && ky == h / 2) || (w % 2 == 0 && kx == w / 2);
            if (ky == 0 && kx == 0) || nyquist {
                continue;
            }
            let fy = signed(ky, h) / h as f64;
            let fx = signed(kx, w) / w as f64;
            let f = (fx * fx + fy * fy).sqrt();
            let mut d = fy.atan2(fx) - theta;
            d = (d + PI / 2.0).rem_euclid(PI) - PI / 2.0;
            let radial = (f / f0).ln();
            out[ky * w + kx] = (-radial * radial / (2.0 * SIGMA_LOG_F * SIGMA_LOG_F)).exp()
                * (-d * d / (2.0 * sigma_theta * sigma_theta)).exp();
        }
    }
    out
}

/// Holds the filter bank and FFT plans for one configuration.
pub struct GistExtractor {
    config: GistConfig,
    bank: Vec<Vec<f64>>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GistExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GistExtractor").field("config", &self.config).finish()
    }
}

impl GistExtractor {
    pub fn new(config: GistConfig) -> Result<Self> {
        config.validate()?;
        let (h, w) = config.resize_to;
        let bank = config
            .filter_specs()
            .iter()
            .map(|&(s, _, f0, theta)| transfer(h, w, f0, theta, config.orientations_per_scale[s]))
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
            config,
            bank,
        })
    }

    pub fn config(&self) -> &GistConfig {
        &self.config
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let (h, w) = self.config.resize_to;
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        rows.process(data);
        let mut col = vec![Complex64::default(); h];
        for x in 0..w {
            for y in 0..h {
                col[y] = data[y * w + x];
            }
            cols.process(&mut col);
            for y in 0..h {
                data[y * w + x] = col[y];
            }
        }
    }

    /// Grid-pooled response magnitudes of one channel: filters x grid rows x grid cols.
    fn channel(&self, plane: &Plane, out: &mut Vec<f64>) {
        let (h, w) = self.config.resize_to;
        let g = self.config.grid;
        let mut spectrum: Vec<Complex64> = plane.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut spectrum, false);
        let norm = 1.0 / (h * w) as f64;
        let mut buf = vec![Complex64::default(); h * w];
        for filter in &self.bank {
            for ((b, s), &t) in buf.iter_mut().zip(&spectrum).zip(filter) {
                *b = s * t;
            }
            self.fft2(&mut buf, true);
            for gy in 0..g {
                let (y0, y1) = (gy * h / g, (gy + 1) * h / g);
                for gx in 0..g {
                    let (x0, x1) = (gx * w / g, (gx + 1) * w / g);
                    let mut sum = 0.0;
                    for y in y0..y1 {
                        sum += buf[y * w + x0..y * w + x1].iter().map(|c| c.norm()).sum::<f64>();
                    }
                    out.push(sum * norm / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
    }

    /// Descriptor ordered channel, filter (scale-major), grid row, grid column.
    pub fn extract(&self, image: &Frame) -> Result<Vec<f64>> {
        let (h, w) = self.config.resize_to;
        let planes: Vec<Vec<f64>> = if self.config.color {
            (0..3).map(|c| image.channel(c)).collect()
        } else {
            vec![image.luma()]
        };
        let mut out = Vec::with_capacity(self.config.dim());
        for p in planes {
            let resized = resize_bilinear(&Plane::new(image.width(), image.height(), p), w, h)?;
            self.channel(&resized, &mut out);
        }
        Ok(out)
    }
}

pub fn gist(image: &Frame, config: &GistConfig) -> Result<Vec<f64>> {
    GistExtractor::new(config.clone())?.extract(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GistConfig {
        GistConfig {
            resize_to: (32, 32),
            ..GistConfig::default()
        }
    }

    #[test]
    fn default_dim() {
        let cfg = GistConfig::default();
        assert_eq!(cfg.dim(), 960);
        let f = Frame::from_fn(24, 20, |x, y| [(x * 9) as u8, (y * 11) as u8, ((x + y) * 3) as u8]);
        assert_eq!(gist(&f, &cfg).unwrap().len(), 960);
    }

    #[test]
    fn constant_image_has_no_response() {
        let f = Frame::filled(32, 32, [200, 10, 90]);
        assert!(gist(&f, &small()).unwrap().iter().all(|&v| v < 1e-9));
    }

    #[test]
    fn filters_are_even() {
        let (h, w) = (16, 16);
        for &(_, _, f0, th) in &GistConfig::default().filter_specs() {
            let t = transfer(h, w, f0, th, 5);
            for ky in 0..h {
                for kx in 0..w {
                    let m = ((h - ky) % h) * w + (w - kx) % w;
                    assert!((t[ky * w + kx] - t[m]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn oversized_grid_rejected() {
        let cfg = GistConfig {
            resize_to: (4, 4),
            grid: 5,
            ..GistConfig::default()
        };
        assert!(GistExtractor::new(cfg).is_err());
    }
}
