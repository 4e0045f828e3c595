//! Synthetic videos whose popularity depends on a controllable visual cue.

use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{write_manifest, VideoRecord};
use crate::error::{Error, Result};
use crate::frame::{write_ppm, Frame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    /// Popular videos brighten over time, unpopular ones darken; each
    /// unpopular video is a time-reversed popular one, so order-blind
    /// statistics carry no label information.
    BrightnessTrend,
    /// Popular videos are brighter overall; frame order is irrelevant.
    StaticBrightness,
    /// Brightness level and trend are independent of the label.
    Noise,
}

impl std::str::FromStr for Cue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness_trend" => Ok(Cue::BrightnessTrend),
            "static_brightness" => Ok(Cue::StaticBrightness),
            "noise" => Ok(Cue::Noise),
            _ => Err(Error::invalid(format!(
                "unknown cue '{s}' (expected brightness_trend, static_brightness or noise)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_videos: usize,
    pub cue: Cue,
    /// Standard deviation of per-pixel Gaussian noise as a fraction of 255.
    pub noise_level: f64,
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl SyntheticConfig {
    /// Frames sized for the mini network: 6 frames of 40x40.
    pub fn mini(n_videos: usize, cue: Cue, noise_level: f64, seed: u64) -> Self {
        Self {
            n_videos,
            cue,
            noise_level,
            seed,
            frames: 6,
            width: 40,
            height: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub record: VideoRecord,
    pub frames: Vec<Frame>,
    /// Intended score before viewcount rounding.
    pub target_score: f64,
    pub label: u8,
}

/// Fixed pattern in `[0, 1]` with edges at several orientations and scales.
fn texture(x: usize, y: usize) -> f64 {
    let (xf, yf) = (x as f64, y as f64);
    let waves = 0.25 * (xf * 0.7).sin() * (yf * 0.45).cos() + 0.15 * ((xf + yf) * 0.3).sin();
    let checker = if (x / 5 + y / 7) % 2 == 0 { 0.1 } else { -0.1 };
    (0.5 + waves + checker).clamp(0.0, 1.0)
}

fn base_image(cfg: &SyntheticConfig, level: f64, tint: [f64; 3]) -> Vec<f64> {
    let mut v = Vec::with_capacity(cfg.width * cfg.height * 3);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let t = texture(x, y);
            for c in tint {
                v.push((255.0 * level * t * c).round());
            }
        }
    }
    v
}

/// Builds the frame sequence from an integer base image and per-frame gains
/// `c_t`: pixel = base + round(c_t * base) + noise.
fn render(cfg: &SyntheticConfig, base: &[f64], gains: &[f64], rng: &mut impl Rng) -> Vec<Frame> {
    let noise = Normal::new(0.0, cfg.noise_level * 255.0).expect("finite noise level");
    gains
        .iter()
        .map(|&g| {
            let rgb = base
                .iter()
                .map(|&b| {
                    let mut v = b + (g * b).round();
                    if cfg.noise_level > 0.0 {
                        v += noise.sample(rng);
                    }
                    v.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            Frame::new(cfg.width, cfg.height, rgb).expect("sized buffer")
        })
        .collect()
}

/// Gains `+-m (t/(T-1) - 1/2)`: antisymmetric in time so `round` cancels
/// exactly in the time average.
fn trend(frames: usize, magnitude: f64, rising: bool) -> Vec<f64> {
    (0..frames)
        .map(|t| {
            let u = if frames > 1 { t as f64 / (frames - 1) as f64 - 0.5 } else { 0.0 };
            if rising {
                magnitude * u
            } else {
                -magnitude * u
            }
        })
        .collect()
}

fn mean_preserving_tint(rng: &mut impl Rng) -> [f64; 3] {
    let a = rng.random_range(-0.1..0.1);
    let b = rng.random_range(-0.1..0.1);
    [1.0 + a, 1.0 + b, 1.0 - a - b]
}

fn video(cfg: &SyntheticConfig, index: usize, label: u8, seed: u64) -> Result<SyntheticVideo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let score = if label == 1 {
        rng.random_range(0.5..4.0)
    } else {
        rng.random_range(-4.0..-0.5)
    };
    let followers = 10f64.powf(rng.random_range(2.0..6.0)).round() as u64;
    let viewcount = ((followers as f64 * 2f64.powf(score)).round() - 1.0).max(0.0) as u64;
    let start = NaiveDate::from_ymd_opt(2016, 6, 1).expect("valid date");
    let published_at = start + Days::new(rng.random_range(0..=120));
    let crawled_at = NaiveDate::from_ymd_opt(2016, 10, 31).expect("valid date");
    let mut tint = mean_preserving_tint(&mut rng);
    let (level, gains) = match cfg.cue {
        Cue::BrightnessTrend => {
            // one shared base image, so every video has the same time average
            tint = [1.0; 3];
            let magnitude = 0.25 + 0.1 * score.abs();
            (0.5, trend(cfg.frames, magnitude, label == 1))
        }
        Cue::StaticBrightness => {
            let level = if label == 1 {
                rng.random_range(0.55..0.8)
            } else {
                rng.random_range(0.2..0.45)
            };
            (level, vec![0.0; cfg.frames])
        }
        Cue::Noise => {
            let level = rng.random_range(0.2..0.8);
            let magnitude = rng.random_range(0.0..0.6);
            let rising = rng.random_bool(0.5);
            (level, trend(cfg.frames, magnitude, rising))
        }
    };
    let base = base_image(cfg, level, tint);
    let frames = render(cfg, &base, &gains, &mut rng);
    let id = format!("vid{index:05}");
    let record = VideoRecord {
        frames_dir: format!("frames/{id}").into(),
        id,
        viewcount,
        followers,
        published_at,
        crawled_at,
        fps: Some(cfg.frames as f64 / super::WINDOW_SECONDS),
        thumbnails: Vec::new(),
    };
    Ok(SyntheticVideo {
        record,
        frames,
        target_score: score,
        label,
    })
}

/// Generates videos in memory. `floor(n/2)` are popular, in shuffled order;
/// every video draws from its own seed so each is independent of the others.
pub fn synthesize(cfg: &SyntheticConfig) -> Result<Vec<SyntheticVideo>> {
    if cfg.n_videos < 4 {
        return Err(Error::invalid(format!("need at least 4 videos, got {}", cfg.n_videos)));
    }
    if cfg.frames == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::invalid("frame count and size must be positive"));
    }
    if !(cfg.noise_level >= 0.0 && cfg.noise_level.is_finite()) {
        return Err(Error::invalid("noise level must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<u8> = (0..cfg.n_videos).map(|i| u8::from(i < cfg.n_videos / 2)).collect();
    labels.shuffle(&mut rng);
    let seeds: Vec<u64> = (0..cfg.n_videos).map(|_| rng.random()).collect();
    labels
        .iter()
        .zip(seeds)
        .enumerate()
        .map(|(i, (&l, s))| video(cfg, i, l, s))
        .collect()
}

/// Writes `manifest.jsonl` and `frames/<id>/frame_NNNNN.ppm` under `out_dir`.
pub fn generate_synthetic(cfg: &SyntheticConfig, out_dir: &Path) -> Result<Vec<SyntheticVideo>> {
    let videos = synthesize(cfg)?;
    for v in &videos {
        let dir = out_dir.join(&v.record.frames_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::at_path(&dir, e))?;
        for (t, f) in v.frames.iter().enumerate() {
            write_ppm(&dir.join(format!("frame_{t:05}.ppm")), f)?;
        }
    }
    let records: Vec<VideoRecord> = videos.iter().map(|v| v.record.clone()).collect();
    write_manifest(&out_dir.join("manifest.jsonl"), &records)?;
    Ok(videos)
}
