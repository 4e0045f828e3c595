//! JSON-lines video manifest with validity filtering.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::frame::{read_ppm, Frame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub frames_dir: PathBuf,
    pub viewcount: u64,
    pub followers: u64,
    pub published_at: NaiveDate,
    pub crawled_at: NaiveDate,
    /// Native frame rate of the stored frames; absent means they are
    /// already sampled at `T / 6` fps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thumbnails: Vec<PathBuf>,
}

impl VideoRecord {
    pub fn age_days(&self) -> i64 {
        (self.crawled_at - self.published_at).num_days()
    }

    pub fn score(&self) -> Result<f64> {
        super::normalized_score(self.viewcount, self.followers)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectionReason {
    Malformed,
    MissingField,
    InvalidFollowers,
    InvalidDates,
    TooRecent,
    MissingFrames,
    DuplicateId,
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectionReason::Malformed => "malformed",
            RejectionReason::MissingField => "missing-field",
            RejectionReason::InvalidFollowers => "invalid-followers",
            RejectionReason::InvalidDates => "invalid-dates",
            RejectionReason::TooRecent => "too-recent",
            RejectionReason::MissingFrames => "missing-frames",
            RejectionReason::DuplicateId => "duplicate-id",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    /// The record's id, or `line-N` when none could be read.
    pub id: String,
    pub line: usize,
    pub reason: RejectionReason,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub records: Vec<VideoRecord>,
    pub rejections: Vec<Rejection>,
}

impl Manifest {
    pub fn frames_dir(&self, record: &VideoRecord) -> PathBuf {
        self.base_dir.join(&record.frames_dir)
    }

    pub fn rejection_csv(&self) -> String {
        let mut s = String::from("id,reason\n");
        for r in &self.rejections {
            s.push_str(&format!("{},{}\n", r.id, r.reason));
        }
        s
    }
}

const REQUIRED: [&str; 6] = ["id", "frames_dir", "viewcount", "followers", "published_at", "crawled_at"];

/// Accepts `YYYY-MM-DD` or an RFC 3339 timestamp (taken as its UTC date).
fn parse_date(v: &Value) -> Option<NaiveDate> {
    let s = v.as_str()?;
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.to_utc().date_naive()))
}

/// Sorted `frame_*.ppm` files of a directory.
pub fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::at_path(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".ppm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_frames(dir: &Path) -> Result<Vec<Frame>> {
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("{} holds no frame_*.ppm files", dir.display())));
    }
    files.iter().map(|p| read_ppm(p)).collect()
}

fn check_line(value: &Value, base: &Path, min_age_days: i64, now: NaiveDate) -> std::result::Result<VideoRecord, RejectionReason> {
    let obj = value.as_object().ok_or(RejectionReason::Malformed)?;
    if REQUIRED.iter().any(|k| obj.get(*k).is_none_or(Value::is_null)) {
        return Err(RejectionReason::MissingField);
    }
    match obj["followers"].as_i64() {
        Some(f) if f >= 1 => {}
        Some(_) => return Err(RejectionReason::InvalidFollowers),
        None if obj["followers"].is_number() => return Err(RejectionReason::InvalidFollowers),
        None => return Err(RejectionReason::Malformed),
    }
    let (Some(published), Some(crawled)) = (parse_date(&obj["published_at"]), parse_date(&obj["crawled_at"])) else {
        return Err(RejectionReason::InvalidDates);
    };
    if crawled < published || crawled > now {
        return Err(RejectionReason::InvalidDates);
    }
    if (crawled - published).num_days() < min_age_days {
        return Err(RejectionReason::TooRecent);
    }
    let mut normalised = value.clone();
    normalised["published_at"] = Value::String(published.to_string());
    normalised["crawled_at"] = Value::String(crawled.to_string());
    let record: VideoRecord = serde_json::from_value(normalised).map_err(|_| RejectionReason::Malformed)?;
    let dir = base.join(&record.frames_dir);
    match frame_files(&dir) {
        Ok(f) if !f.is_empty() => Ok(record),
        _ => Err(RejectionReason::MissingFrames),
    }
}

/// Parses manifest text; `base` is the directory frame paths resolve against.
pub fn parse_manifest(text: &str, base: &Path, min_age_days: i64, now: NaiveDate) -> Manifest {
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Option<Value> = serde_json::from_str(line).ok();
        let id = value
            .as_ref()
            .and_then(|v| v.get("id"))
            .and_then(Value::as_str)
            .map_or_else(|| format!("line-{line_no}"), str::to_string);
        let outcome = match &value {
            None => Err(RejectionReason::Malformed),
            Some(v) => check_line(v, base, min_age_days, now),
        };
        match outcome {
            Ok(r) if !ids.insert(r.id.clone()) => rejections.push(Rejection {
                id,
                line: line_no,
                reason: RejectionReason::DuplicateId,
            }),
            Ok(r) => records.push(r),
            Err(reason) => {
                log::info!("rejecting manifest line {line_no} ({id}): {reason}");
                rejections.push(Rejection { id, line: line_no, reason })
            }
        }
    }
    Manifest {
        base_dir: base.to_path_buf(),
        records,
        rejections,
    }
}

pub fn ingest_manifest(path: &Path, min_age_days: i64, now: NaiveDate) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
    let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok(parse_manifest(&text, &base, min_age_days, now))
}

pub fn write_manifest(path: &Path, records: &[VideoRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::at_path(path, e))
}
