use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use popcast::dataset::manifest::{ingest_manifest, load_frames, Manifest};
use popcast::dataset::{median_split, sample_frames, WINDOW_SECONDS};
use popcast::features::{video_features, Descriptor, DescriptorSet, FeatureCache, GistConfig, HogConfig};
use popcast::Frame;

use crate::CliError;

pub const FEATURE_NAMES: [&str; 2] = ["hog", "gist"];

#[derive(Clone, Debug)]
pub struct LoadedVideo {
    pub id: String,
    pub score: f64,
    pub label: u8,
    pub frames: Vec<Frame>,
}

pub fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.jsonl")
    } else {
        data.to_path_buf()
    }
}

pub fn read_manifest(data: &Path, min_age_days: i64, now: NaiveDate) -> anyhow::Result<Manifest> {
    let path = manifest_path(data);
    let manifest = ingest_manifest(&path, min_age_days, now)?;
    for r in &manifest.rejections {
        log::warn!("rejected {} (line {}): {}", r.id, r.line, r.reason);
    }
    Ok(manifest)
}

/// Ingests, samples `t` frames per video and applies the median split.
pub fn load_dataset(manifest: &Manifest, t: usize) -> anyhow::Result<Vec<LoadedVideo>> {
    if manifest.records.len() < 2 {
        bail!("dataset has {} usable videos, need at least 2", manifest.records.len());
    }
    let mut videos = Vec::with_capacity(manifest.records.len());
    for rec in &manifest.records {
        let dir = manifest.frames_dir(rec);
        let all = load_frames(&dir).with_context(|| format!("loading frames of '{}'", rec.id))?;
        let fps = rec.fps.unwrap_or(t as f64 / WINDOW_SECONDS);
        videos.push(LoadedVideo {
            id: rec.id.clone(),
            score: rec.score()?,
            label: 0,
            frames: sample_frames(&all, fps, t)?,
        });
    }
    let scores: Vec<f64> = videos.iter().map(|v| v.score).collect();
    for (v, l) in videos.iter_mut().zip(median_split(&scores)?) {
        v.label = l;
    }
    Ok(videos)
}

pub fn parse_features(spec: &str) -> Result<DescriptorSet, CliError> {
    let mut parts = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        parts.push(match name {
            "hog" => Descriptor::Hog(HogConfig::default()),
            "gist" => Descriptor::Gist(GistConfig::default()),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown feature '{other}'; known features: {}",
                    FEATURE_NAMES.join(", ")
                )))
            }
        });
    }
    if parts.is_empty() {
        return Err(CliError::Usage(format!(
            "no features given; known features: {}",
            FEATURE_NAMES.join(", ")
        )));
    }
    DescriptorSet::new(parts).map_err(|e| CliError::Usage(e.to_string()))
}

/// Finds the default-configured descriptor set whose id is `id`.
pub fn descriptor_set_for_id(id: &str) -> anyhow::Result<DescriptorSet> {
    for spec in ["hog", "gist", "hog,gist", "gist,hog"] {
        let set = parse_features(spec).map_err(|e| anyhow::anyhow!("{e}"))?;
        if set.id() == id {
            return Ok(set);
        }
    }
    bail!("model was trained on features '{id}', which this build cannot recompute")
}

/// Feature vectors for `videos`, taken from `cache` where present and
/// computed otherwise. Returns the vectors and whether the cache changed.
pub fn features_for(
    videos: &[LoadedVideo],
    set: &DescriptorSet,
    cache: &mut FeatureCache,
) -> anyhow::Result<(Vec<Vec<f64>>, bool)> {
    if cache.descriptor_id != set.id() || cache.dim != set.dim() {
        log::warn!(
            "feature cache holds '{}', need '{}'; recomputing",
            cache.descriptor_id,
            set.id()
        );
        *cache = FeatureCache::new(set.id(), set.dim());
    }
    let mut changed = false;
    let mut out = Vec::with_capacity(videos.len());
    for v in videos {
        if let Some(hit) = cache.get(&v.id) {
            out.push(hit.to_vec());
            continue;
        }
        let f = video_features(&v.frames, set).with_context(|| format!("features of '{}'", v.id))?;
        cache.push(v.id.clone(), f.values.clone())?;
        out.push(f.values);
        changed = true;
    }
    Ok((out, changed))
}

pub fn open_cache(path: Option<&Path>, set: &DescriptorSet) -> anyhow::Result<FeatureCache> {
    match path {
        Some(p) if p.exists() => Ok(FeatureCache::read(p)?),
        _ => Ok(FeatureCache::new(set.id(), set.dim())),
    }
}

/// Candidate videos for ranking: every subdirectory holding PPM frames.
/// A generated dataset directory is accepted too (its `frames/` is used).
pub fn load_candidates(dir: &Path, t: usize) -> anyhow::Result<Vec<(String, Vec<Frame>)>> {
    let root = if dir.join("frames").is_dir() { dir.join("frames") } else { dir.to_path_buf() };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&root)
        .with_context(|| format!("reading candidates in {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for p in entries {
        let id = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match load_frames(&p) {
            Ok(frames) => out.push((id, sample_frames(&frames, t as f64 / WINDOW_SECONDS, t)?)),
            Err(e) => log::warn!("skipping candidate '{id}': {e}"),
        }
    }
    Ok(out)
}
