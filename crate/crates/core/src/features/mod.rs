//! Hand-crafted frame descriptors, early fusion and feature files.

pub mod gist;
pub mod hog;
pub mod resize;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gist::{gist, GistConfig, GistExtractor};
pub use hog::{cell_histograms, hog, HogConfig};
pub use resize::{resize_bilinear, Plane};

use crate::binio::{ByteReader, ByteWriter};
use crate::canon::{canonical_json, short_hash};
use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub descriptor_id: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, descriptor_id: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {i} is {}", values[i])));
        }
        Ok(Self {
            values,
            descriptor_id: descriptor_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Descriptor {
    Hog(HogConfig),
    Gist(GistConfig),
}

impl Descriptor {
    pub fn name(&self) -> &'static str {
        match self {
            Descriptor::Hog(_) => "hog",
            Descriptor::Gist(_) => "gist",
        }
    }

    /// Name plus a short hash of the configuration.
    pub fn id(&self) -> String {
        format!("{}-{}", self.name(), &short_hash(&canonical_json(self))[..8])
    }

    pub fn dim(&self) -> usize {
        match self {
            Descriptor::Hog(c) => c.dim(),
            Descriptor::Gist(c) => c.dim(),
        }
    }
}

enum Prepared {
    Hog(HogConfig),
    Gist(GistExtractor),
}

/// An ordered list of descriptors with any per-config state (GIST filter
/// banks) built once.
pub struct DescriptorSet {
    descriptors: Vec<Descriptor>,
    prepared: Vec<Prepared>,
}

impl DescriptorSet {
    pub fn new(descriptors: Vec<Descriptor>) -> Result<Self> {
        if descriptors.is_empty() {
            return Err(Error::invalid("descriptor set is empty"));
        }
        let prepared = descriptors
            .iter()
            .map(|d| {
                Ok(match d {
                    Descriptor::Hog(c) => {
                        c.validate()?;
                        Prepared::Hog(*c)
                    }
                    Descriptor::Gist(c) => Prepared::Gist(GistExtractor::new(c.clone())?),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { descriptors, prepared })
    }

    /// HOG followed by GIST, both at their default configurations.
    pub fn hog_gist() -> Self {
        Self::new(vec![
            Descriptor::Hog(HogConfig::default()),
            Descriptor::Gist(GistConfig::default()),
        ])
        .expect("default descriptors are valid")
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    pub fn dim(&self) -> usize {
        self.descriptors.iter().map(Descriptor::dim).sum()
    }

    pub fn id(&self) -> String {
        self.descriptors.iter().map(Descriptor::id).collect::<Vec<_>>().join("+")
    }

    /// One vector per descriptor for a single frame.
    pub fn frame_parts(&self, frame: &Frame) -> Result<Vec<FeatureVector>> {
        self.descriptors
            .iter()
            .zip(&self.prepared)
            .map(|(d, p)| {
                let values = match p {
                    Prepared::Hog(c) => hog(frame, c)?,
                    Prepared::Gist(g) => g.extract(frame)?,
                };
                FeatureVector::new(values, d.id())
            })
            .collect()
    }

    pub fn frame_features(&self, frame: &Frame) -> Result<FeatureVector> {
        early_fusion(&self.frame_parts(frame)?)
    }
}

/// Concatenation in the given order; the id joins the part ids with `+`.
pub fn early_fusion(parts: &[FeatureVector]) -> Result<FeatureVector> {
    if parts.is_empty() {
        return Err(Error::invalid("nothing to fuse"));
    }
    let values = parts.iter().flat_map(|p| p.values.iter().copied()).collect();
    let id = parts.iter().map(|p| p.descriptor_id.as_str()).collect::<Vec<_>>().join("+");
    Ok(FeatureVector { values, descriptor_id: id })
}

/// Per-descriptor elementwise mean over frames, then fusion.
pub fn video_features(frames: &[Frame], set: &DescriptorSet) -> Result<FeatureVector> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot describe an empty frame sequence"));
    }
    let per_frame: Vec<Vec<FeatureVector>> = frames
        .par_iter()
        .map(|f| set.frame_parts(f))
        .collect::<Result<_>>()?;
    let n = frames.len() as f64;
    let mut parts = per_frame[0].clone();
    for frame in &per_frame[1..] {
        for (acc, p) in parts.iter_mut().zip(frame) {
            acc.values.iter_mut().zip(&p.values).for_each(|(a, v)| *a += v);
        }
    }
    for p in &mut parts {
        p.values.iter_mut().for_each(|v| *v /= n);
    }
    early_fusion(&parts)
}

/// CSV without header: `video_id,v1,...,vD`. Blank lines are skipped; errors
/// name the 1-based line.
pub fn parse_external_features(text: &str, expected_dim: usize) -> Result<BTreeMap<String, FeatureVector>> {
    let mut out = BTreeMap::new();
    let id = format!("external-{expected_dim}");
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Row { what: "feature row", row, reason };
        let mut fields = line.split(',');
        let vid = fields.next().unwrap_or("").trim();
        if vid.is_empty() {
            return Err(err("empty video id".into()));
        }
        let values = fields
            .map(|f| f.trim().parse::<f64>().map_err(|e| err(format!("bad value '{f}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected_dim {
            return Err(err(format!("{} values, expected {expected_dim}", values.len())));
        }
        let fv = FeatureVector::new(values, id.clone()).map_err(|e| err(e.to_string()))?;
        if out.insert(vid.to_string(), fv).is_some() {
            return Err(err(format!("duplicate video id '{vid}'")));
        }
    }
    Ok(out)
}

pub fn load_external_features(path: &Path, expected_dim: usize) -> Result<BTreeMap<String, FeatureVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
    parse_external_features(&text, expected_dim)
}

pub const CACHE_MAGIC: &[u8; 4] = b"PFEA";

/// Per-video features for one descriptor set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub descriptor_id: String,
    pub dim: usize,
    pub records: Vec<(String, Vec<f64>)>,
}

impl FeatureCache {
    pub fn new(descriptor_id: impl Into<String>, dim: usize) -> Self {
        Self {
            descriptor_id: descriptor_id.into(),
            dim,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::shape(format!("feature length {} != cache dim {}", values.len(), self.dim)));
        }
        self.records.push((id.into(), values));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.records.iter().find(|(i, _)| i == id).map(|(_, v)| v.as_slice())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(CACHE_MAGIC);
        w.string(&self.descriptor_id);
        w.u64(self.dim as u64);
        w.u64(self.records.len() as u64);
        for (id, v) in &self.records {
            w.string(id);
            w.f64s(v);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CACHE_MAGIC)?;
        let descriptor_id = r.string()?;
        let dim = r.len_u64()?;
        let count = r.len_u64()?;
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = r.string()?;
            records.push((id, r.f64s(dim)?));
        }
        r.finish()?;
        Ok(Self { descriptor_id, dim, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::at_path(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::at_path(path, e))?;
        Self::decode(&bytes)
    }
}
