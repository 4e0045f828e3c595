//! Popularity scores, labels, frame sampling, manifests, folds and synthetic data.

pub mod manifest;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use manifest::{
    ingest_manifest, load_frames, parse_manifest, write_manifest, Manifest, Rejection, RejectionReason, VideoRecord,
};
pub use synthetic::{generate_synthetic, synthesize, Cue, SyntheticConfig, SyntheticVideo};

use crate::canon::short_hash;
use crate::error::{Error, Result};

/// Length in seconds of the window frames are drawn from.
pub const WINDOW_SECONDS: f64 = 6.0;

/// `log2((viewcount + 1) / followers)`.
pub fn normalized_score(viewcount: u64, followers: u64) -> Result<f64> {
    if followers < 1 {
        return Err(Error::invalid("followers must be at least 1"));
    }
    Ok(((viewcount as f64 + 1.0) / followers as f64).log2())
}

/// Lower median of the scores.
pub fn lower_median(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot take the median of no scores"));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[(s.len() - 1) / 2])
}

/// Label 1 iff the score is strictly above the lower median.
pub fn median_split(scores: &[f64]) -> Result<Vec<u8>> {
    if let Some(v) = scores.iter().find(|v| v.is_nan()) {
        return Err(Error::invalid(format!("score {v} is not a number")));
    }
    let m = lower_median(scores)?;
    Ok(scores.iter().map(|&s| u8::from(s > m)).collect())
}

/// Source indices of `t` frames taken uniformly at `t / 6` fps from the
/// first six seconds of a video recorded at `fps`, nearest-frame, with the
/// last frame repeated when the video is shorter.
pub fn sample_indices(available: usize, fps: f64, t: usize) -> Result<Vec<usize>> {
    if available == 0 {
        return Err(Error::invalid("video has no frames"));
    }
    if t == 0 || !(fps > 0.0) {
        return Err(Error::invalid("frame count and fps must be positive"));
    }
    let step = WINDOW_SECONDS / t as f64 * fps;
    Ok((0..t)
        .map(|k| ((k as f64 * step).round() as usize).min(available - 1))
        .collect())
}

pub fn sample_frames<T: Clone>(frames: &[T], fps: f64, t: usize) -> Result<Vec<T>> {
    Ok(sample_indices(frames.len(), fps, t)?
        .into_iter()
        .map(|i| frames[i].clone())
        .collect())
}

/// Assignment of video ids to `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    /// Ids in their original order.
    pub ids: Vec<String>,
    pub assignments: BTreeMap<String, usize>,
}

/// Seeded shuffle, then fold `p % k` for shuffled position `p`.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::invalid(format!("{} ids cannot fill {k} folds", ids.len())));
    }
    let mut seen = HashSet::new();
    if let Some(d) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::invalid(format!("duplicate id '{d}'")));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignments = order
        .iter()
        .enumerate()
        .map(|(p, &i)| (ids[i].clone(), p % k))
        .collect();
    Ok(FoldSplit {
        k,
        seed,
        ids: ids.to_vec(),
        assignments,
    })
}

impl FoldSplit {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    /// Indices into `ids` of the test part of `fold`.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.assignments[&self.ids[i]] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.assignments[&self.ids[i]] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.assignments.values() {
            s[f] += 1;
        }
        s
    }

    /// Hash of the id-to-fold table in id order.
    pub fn fingerprint(&self) -> String {
        let text: String = self.assignments.iter().map(|(id, f)| format!("{id}:{f}\n")).collect();
        short_hash(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        assert_eq!(normalized_score(0, 1).unwrap(), 0.0);
        assert_eq!(normalized_score(1023, 1).unwrap(), 10.0);
        assert_eq!(normalized_score(999, 1000).unwrap(), 0.0);
        assert!((normalized_score(150_000, 1_048_576).unwrap() + 2.805_4).abs() < 1e-4);
        assert!(normalized_score(5, 0).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_split(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(median_split(&[5.0; 4]).unwrap(), vec![0; 4]);
        assert_eq!(median_split(&[3.0, 1.0, 2.0]).unwrap(), vec![1, 0, 0]);
        assert!(median_split(&[]).is_err());
    }

    #[test]
    fn sampling_examples() {
        let idx = sample_indices(180, 30.0, 18).unwrap();
        assert_eq!(idx, (0..18).map(|k| k * 10).collect::<Vec<_>>());
        assert_eq!(sample_frames(&["a"], 30.0, 6).unwrap(), vec!["a"; 6]);
        assert_eq!(sample_indices(6, 1.0, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(sample_indices(25, 5.0, 6).unwrap(), vec![0, 5, 10, 15, 20, 24]);
        assert!(sample_indices(0, 30.0, 6).is_err());
    }

    #[test]
    fn ten_ids_five_folds() {
        let ids: Vec<String> = (0..10).map(|i| format!("v{i}")).collect();
        let s = kfold_split(&ids, 5, 1).unwrap();
        assert_eq!(s.fold_sizes(), vec![2; 5]);
        for f in 0..5 {
            assert_eq!(s.test_indices(f).len() + s.train_indices(f).len(), 10);
        }
        assert!(kfold_split(&ids, 1, 0).is_err());
        assert!(kfold_split(&ids[..3], 5, 0).is_err());
    }
}
