//! Logistic regression and RBF SVM over standardised feature vectors.

pub mod logreg;
pub mod svm;

use std::path::Path;

pub use logreg::{logreg_train, sigmoid, LogRegModel, LogRegOptions, LogRegReport};
pub use svm::{
    dual_objective, from_svm_label, kernel_matrix, platt_fit, rbf_kernel, smo_solve, svm_train, to_svm_label,
    SmoOptions, SmoSolution, SvmModel, SvmOptions, SvmReport,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

/// Checks that rows are nonempty, equally sized and match the labels; returns the dimension.
pub(crate) fn check_rows<T>(x: &[Vec<f64>], y: &[T]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if let Some(i) = x.iter().position(|r| r.len() != d) {
        return Err(Error::shape(format!("row {i} has {} features, row 0 has {d}", x[i].len())));
    }
    Ok(d)
}

pub(crate) fn check_two_classes(y: &[u8]) -> Result<()> {
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {bad} is not 0 or 1")));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::invalid("training data must contain both classes"));
    }
    Ok(())
}

pub const GRID_C: [f64; 3] = [0.1, 1.0, 10.0];
/// Multiples of `1 / dim`.
pub const GRID_GAMMA: [f64; 3] = [0.1, 1.0, 10.0];

/// Picks `c` and `gamma` from [`GRID_C`] x [`GRID_GAMMA`] by 3-fold
/// cross-validated accuracy on raw features; ties keep the earlier grid point.
pub fn svm_grid_search(x: &[Vec<f64>], y: &[u8], base: &SvmOptions) -> Result<SvmOptions> {
    let d = check_rows(x, y)?;
    check_two_classes(y)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(base.seed ^ 0x6772_6964));
    let folds = 3.min(x.len());
    let mut best: Option<(f64, SvmOptions)> = None;
    for &c in &GRID_C {
        for &g in &GRID_GAMMA {
            let opts = SvmOptions {
                c,
                gamma: Some(g / d as f64),
                ..base.clone()
            };
            let mut correct = 0usize;
            for f in 0..folds {
                let (test, train): (Vec<usize>, Vec<usize>) = (0..order.len()).partition(|p| p % folds == f);
                let tx: Vec<Vec<f64>> = train.iter().map(|&p| x[order[p]].clone()).collect();
                let ty: Vec<u8> = train.iter().map(|&p| y[order[p]]).collect();
                let Ok((m, _)) = ShallowModel::train_svm("", &tx, &ty, &opts) else {
                    continue;
                };
                for &p in &test {
                    if u8::from(m.predict_proba(&x[order[p]])?[1] >= 0.5) == y[order[p]] {
                        correct += 1;
                    }
                }
            }
            let acc = correct as f64 / x.len() as f64;
            log::debug!("svm grid c={c} gamma={g}/dim: cv accuracy {acc:.4}");
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, opts));
            }
        }
    }
    Ok(best.expect("non-empty grid").1)
}

/// Per-dimension affine map to zero mean and unit variance, fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation, or 1 where it is zero.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let d = check_rows(x, x)?;
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x {
            var.iter_mut().zip(r).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!("input has {} features, expected {}", x.len(), self.dim())));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform_all(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|r| self.transform(r)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    LogReg(LogRegModel),
    Svm(SvmModel),
}

/// A classifier together with the standardisation it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct ShallowModel {
    pub descriptor_id: String,
    pub standardizer: Standardizer,
    pub classifier: Classifier,
}

pub const MODEL_MAGIC: &[u8; 4] = b"PSHL";

impl ShallowModel {
    pub fn train_logreg(descriptor_id: &str, x: &[Vec<f64>], y: &[u8], opts: &LogRegOptions) -> Result<(Self, LogRegReport)> {
        let standardizer = Standardizer::fit(x)?;
        let (m, rep) = logreg_train(&standardizer.transform_all(x)?, y, opts)?;
        Ok((
            Self {
                descriptor_id: descriptor_id.to_string(),
                standardizer,
                classifier: Classifier::LogReg(m),
            },
            rep,
        ))
    }

    pub fn train_svm(descriptor_id: &str, x: &[Vec<f64>], y: &[u8], opts: &SvmOptions) -> Result<(Self, SvmReport)> {
        let standardizer = Standardizer::fit(x)?;
        let (m, rep) = svm_train(&standardizer.transform_all(x)?, y, opts)?;
        Ok((
            Self {
                descriptor_id: descriptor_id.to_string(),
                standardizer,
                classifier: Classifier::Svm(m),
            },
            rep,
        ))
    }

    /// `[p(unpopular), p(popular)]` for a raw (unstandardised) feature vector.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        let z = self.standardizer.transform(x)?;
        match &self.classifier {
            Classifier::LogReg(m) => m.predict_proba(&z),
            Classifier::Svm(m) => m.predict_proba(&z),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.classifier {
            Classifier::LogReg(_) => "logreg",
            Classifier::Svm(_) => "svm",
        }
    }

    /// `"PSHL" | u8 kind | u64 dim | means | scales | payload`, where the
    /// payload starts with the descriptor id.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MODEL_MAGIC);
        w.u8(match self.classifier {
            Classifier::LogReg(_) => 0,
            Classifier::Svm(_) => 1,
        });
        w.u64(self.standardizer.dim() as u64);
        w.f64s(&self.standardizer.mean);
        w.f64s(&self.standardizer.scale);
        w.string(&self.descriptor_id);
        match &self.classifier {
            Classifier::LogReg(m) => {
                w.f64(m.l2);
                w.f64(m.bias);
                w.u64(m.weights.len() as u64);
                w.f64s(&m.weights);
            }
            Classifier::Svm(m) => {
                w.f64(m.c);
                w.f64(m.gamma);
                w.f64(m.bias);
                w.f64(m.platt.0);
                w.f64(m.platt.1);
                w.u64(m.support_vectors.len() as u64);
                w.u64(m.dim() as u64);
                w.f64s(&m.dual_coef);
                for sv in &m.support_vectors {
                    w.f64s(sv);
                }
            }
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MODEL_MAGIC)?;
        let kind = r.u8()?;
        let dim = r.len_u64()?;
        let mean = r.f64s(dim)?;
        let scale = r.f64s(dim)?;
        let descriptor_id = r.string()?;
        let classifier = match kind {
            0 => {
                let l2 = r.f64()?;
                let bias = r.f64()?;
                let n = r.len_u64()?;
                Classifier::LogReg(LogRegModel { weights: r.f64s(n)?, bias, l2 })
            }
            1 => {
                let c = r.f64()?;
                let gamma = r.f64()?;
                let bias = r.f64()?;
                let platt = (r.f64()?, r.f64()?);
                let n = r.len_u64()?;
                let d = r.len_u64()?;
                let dual_coef = r.f64s(n)?;
                let support_vectors = (0..n).map(|_| r.f64s(d)).collect::<Result<_>>()?;
                Classifier::Svm(SvmModel { support_vectors, dual_coef, bias, gamma, c, platt })
            }
            k => return Err(Error::Format(format!("unknown shallow model kind {k}"))),
        };
        r.finish()?;
        Ok(Self {
            descriptor_id,
            standardizer: Standardizer { mean, scale },
            classifier,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::at_path(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::at_path(path, e))?;
        Self::decode(&bytes)
    }
}
