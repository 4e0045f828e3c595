//! k-fold comparison of models on one shared split.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, spearman, Aggregate};
use crate::canon::{canonical_json, short_hash};
use crate::dataset::{kfold_split, FoldSplit};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::lrcn::{predict, train, LabeledFrames, LrcnConfig, LrcnModel};
use crate::scalar::{Precision, Scalar};
use crate::shallow::{svm_grid_search, LogRegOptions, ShallowModel, SvmOptions};

/// One labelled video as seen by every model.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSample {
    pub id: String,
    pub label: u8,
    pub score: f64,
    /// Source-size frames (used by the recurrent network).
    pub frames: Vec<Frame>,
    /// Mean-pooled descriptor vector (used by shallow models).
    pub features: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentData {
    pub samples: Vec<ExperimentSample>,
    /// Descriptor id of the `features` vectors.
    pub feature_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Lrcn {
        config: LrcnConfig,
        #[serde(default)]
        precision: Precision,
    },
    LogReg {
        l2: f64,
        epochs: usize,
    },
    Svm {
        c: f64,
        gamma: Option<f64>,
        #[serde(default)]
        grid_search: bool,
    },
    /// Emits the true label as the probability.
    Oracle,
    /// Uniform random probability.
    CoinFlip,
}

impl ModelSpec {
    pub fn logreg_default() -> Self {
        let d = LogRegOptions::default();
        ModelSpec::LogReg { l2: d.l2, epochs: d.epochs }
    }

    pub fn svm_default() -> Self {
        ModelSpec::Svm {
            c: 1.0,
            gamma: None,
            grid_search: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Lrcn { .. } => "lrcn",
            ModelSpec::LogReg { .. } => "logreg",
            ModelSpec::Svm { .. } => "svm",
            ModelSpec::Oracle => "oracle",
            ModelSpec::CoinFlip => "coinflip",
        }
    }

    fn features(&self, data: &ExperimentData) -> String {
        match self {
            ModelSpec::Lrcn { .. } => "frames".into(),
            ModelSpec::LogReg { .. } | ModelSpec::Svm { .. } => data.feature_id.clone(),
            ModelSpec::Oracle => "labels".into(),
            ModelSpec::CoinFlip => "none".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub spearman: f64,
    pub spearman_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub model: String,
    pub features: String,
    pub config_hash: String,
    pub folds: Vec<FoldMetrics>,
    pub accuracy: Option<Aggregate>,
    pub spearman: Option<Aggregate>,
    /// Set when the model failed; the other models still run.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub k: usize,
    pub samples: usize,
    pub split_fingerprint: String,
    pub models: Vec<FoldReport>,
}

fn seed_for(seed: u64, fold: usize, salt: u64) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt
}

fn lrcn_fold<S: Scalar>(
    config: &LrcnConfig,
    data: &ExperimentData,
    train_idx: &[usize],
    test_idx: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = LrcnConfig { seed, ..config.clone() };
    let mut model = LrcnModel::<S>::from_config(cfg)?;
    let samples: Vec<LabeledFrames> = train_idx
        .iter()
        .map(|&i| LabeledFrames {
            frames: data.samples[i].frames.clone(),
            label: data.samples[i].label,
        })
        .collect();
    train(&mut model, &samples)?;
    test_idx
        .iter()
        .map(|&i| predict(&model, &data.samples[i].frames).map(|p| p.probs[1]))
        .collect()
}

fn features_of(data: &ExperimentData, idx: &[usize]) -> Result<Vec<Vec<f64>>> {
    idx.iter()
        .map(|&i| {
            data.samples[i]
                .features
                .clone()
                .ok_or_else(|| Error::invalid(format!("sample '{}' has no feature vector", data.samples[i].id)))
        })
        .collect()
}

/// Probability of the popular class for each test sample.
fn fold_probs(spec: &ModelSpec, data: &ExperimentData, train_idx: &[usize], test_idx: &[usize], seed: u64) -> Result<Vec<f64>> {
    let labels = |idx: &[usize]| idx.iter().map(|&i| data.samples[i].label).collect::<Vec<u8>>();
    match spec {
        ModelSpec::Oracle => Ok(test_idx.iter().map(|&i| data.samples[i].label as f64).collect()),
        ModelSpec::CoinFlip => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(test_idx.iter().map(|_| rng.random_range(0.0..1.0)).collect())
        }
        ModelSpec::Lrcn { config, precision } => match precision {
            Precision::Fast => lrcn_fold::<f32>(config, data, train_idx, test_idx, seed),
            Precision::High => lrcn_fold::<f64>(config, data, train_idx, test_idx, seed),
        },
        ModelSpec::LogReg { l2, epochs } => {
            let x = features_of(data, train_idx)?;
            let opts = LogRegOptions {
                l2: *l2,
                epochs: *epochs,
                seed,
                ..LogRegOptions::default()
            };
            let (m, _) = ShallowModel::train_logreg(&data.feature_id, &x, &labels(train_idx), &opts)?;
            features_of(data, test_idx)?.iter().map(|v| m.predict_proba(v).map(|p| p[1])).collect()
        }
        ModelSpec::Svm { c, gamma, grid_search } => {
            let x = features_of(data, train_idx)?;
            let y = labels(train_idx);
            let mut opts = SvmOptions {
                c: *c,
                gamma: *gamma,
                seed,
                ..SvmOptions::default()
            };
            if *grid_search {
                opts = svm_grid_search(&x, &y, &opts)?;
            }
            let (m, _) = ShallowModel::train_svm(&data.feature_id, &x, &y, &opts)?;
            features_of(data, test_idx)?.iter().map(|v| m.predict_proba(v).map(|p| p[1])).collect()
        }
    }
}

fn run_model(spec: &ModelSpec, data: &ExperimentData, split: &FoldSplit, seed: u64, salt: u64) -> Result<Vec<FoldMetrics>> {
    let mut folds = Vec::with_capacity(split.k);
    for fold in 0..split.k {
        let train_idx = split.train_indices(fold);
        let test_idx = split.test_indices(fold);
        let probs = fold_probs(spec, data, &train_idx, &test_idx, seed_for(seed, fold, salt))?;
        if let Some(p) = probs.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("fold {fold}: probability {p}")));
        }
        let predicted: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let truth: Vec<u8> = test_idx.iter().map(|&i| data.samples[i].label).collect();
        let scores: Vec<f64> = test_idx.iter().map(|&i| data.samples[i].score).collect();
        let rho = spearman(&probs, &scores)?;
        log::info!("{} fold {fold}: accuracy {:.4}", spec.name(), accuracy(&predicted, &truth)?);
        folds.push(FoldMetrics {
            fold,
            accuracy: accuracy(&predicted, &truth)?,
            spearman: rho.rho,
            spearman_degenerate: rho.degenerate,
        });
    }
    Ok(folds)
}

/// Runs every model on one split of `data` built from `seed`.
pub fn run_experiment(data: &ExperimentData, models: &[ModelSpec], k: usize, seed: u64) -> Result<ExperimentReport> {
    let ids: Vec<String> = data.samples.iter().map(|s| s.id.clone()).collect();
    let split = kfold_split(&ids, k, seed)?;
    run_experiment_on(data, models, &split)
}

/// As [`run_experiment`] with a caller-supplied split.
pub fn run_experiment_on(data: &ExperimentData, models: &[ModelSpec], split: &FoldSplit) -> Result<ExperimentReport> {
    if split.ids.len() != data.samples.len() || split.ids.iter().zip(&data.samples).any(|(a, s)| *a != s.id) {
        return Err(Error::invalid("fold split does not match the dataset ids"));
    }
    let mut reports = Vec::with_capacity(models.len());
    for (m, spec) in models.iter().enumerate() {
        let outcome = run_model(spec, data, split, split.seed, m as u64);
        let mut report = FoldReport {
            model: spec.name().to_string(),
            features: spec.features(data),
            config_hash: short_hash(&canonical_json(spec)),
            folds: Vec::new(),
            accuracy: None,
            spearman: None,
            error: None,
        };
        match outcome {
            Ok(folds) => {
                let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
                let rho: Vec<f64> = folds.iter().map(|f| f.spearman).collect();
                report.accuracy = Some(Aggregate::of(&acc));
                report.spearman = Some(Aggregate::of(&rho));
                report.folds = folds;
            }
            Err(e) => {
                log::error!("model {} failed: {e}", spec.name());
                report.error = Some(e.to_string());
            }
        }
        reports.push(report);
    }
    Ok(ExperimentReport {
        seed: split.seed,
        k: split.k,
        samples: data.samples.len(),
        split_fingerprint: split.fingerprint(),
        models: reports,
    })
}

impl ExperimentReport {
    pub fn model(&self, name: &str) -> Option<&FoldReport> {
        self.models.iter().find(|m| m.model == name)
    }

    /// `model,fold,accuracy,spearman`, then `mean` and `std` rows per model.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,fold,accuracy,spearman\n");
        for m in &self.models {
            if m.error.is_some() {
                s.push_str(&format!("{},failed,,\n", m.model));
                continue;
            }
            for f in &m.folds {
                s.push_str(&format!("{},{},{},{}\n", m.model, f.fold, f.accuracy, f.spearman));
            }
            if let (Some(a), Some(r)) = (m.accuracy, m.spearman) {
                s.push_str(&format!("{},mean,{},{}\n", m.model, a.mean, r.mean));
                s.push_str(&format!("{},std,{},{}\n", m.model, a.std, r.std));
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable report")
    }

    /// Aligned table with columns model, features, accuracy, spearman.
    pub fn to_table(&self) -> String {
        let rows: Vec<[String; 4]> = self
            .models
            .iter()
            .map(|m| match (m.accuracy, m.spearman) {
                (Some(a), Some(r)) => [m.model.clone(), m.features.clone(), a.display(3), r.display(3)],
                _ => [m.model.clone(), m.features.clone(), "failed".into(), "failed".into()],
            })
            .collect();
        let header = ["model", "features", "accuracy", "spearman"].map(String::from);
        let mut widths = header.clone().map(|h| h.chars().count());
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |r: &[String; 4]| {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            format!("{}\n", cells.join(" | ").trim_end())
        };
        let mut out = line(&header);
        out.push_str(&format!("{}\n", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-|-")));
        for r in &rows {
            out.push_str(&line(r));
        }
        out
    }

    /// Writes `results.csv`, `report.json` and `table.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
        for (name, body) in [
            ("results.csv", self.to_csv()),
            ("report.json", self.to_json()),
            ("table.txt", self.to_table()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::at_path(&p, e))?;
        }
        Ok(())
    }
}
