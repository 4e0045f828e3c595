use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of positions where the labels agree.
pub fn accuracy(predicted: &[u8], truth: &[u8]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// 1-based ranks; tied values share the mean of their rank range.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Set when either rank vector is constant; `rho` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation of average ranks.
pub fn spearman(scores: &[f64], targets: &[f64]) -> Result<Spearman> {
    if scores.len() != targets.len() {
        return Err(Error::shape(format!("{} scores for {} targets", scores.len(), targets.len())));
    }
    if scores.len() < 2 {
        return Err(Error::invalid("spearman needs at least two pairs"));
    }
    if scores.iter().chain(targets).any(|v| v.is_nan()) {
        return Err(Error::invalid("spearman inputs contain NaN"));
    }
    let (a, b) = (average_ranks(scores), average_ranks(targets));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(Spearman { rho: 0.0, degenerate: true });
    }
    Ok(Spearman {
        rho: (cov / (va * vb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Mean and sample (n - 1) standard deviation; the deviation of a single value is 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }

    /// `0.912 ± 0.021` at the given precision.
    pub fn display(&self, decimals: usize) -> String {
        format!("{:.*} ± {:.*}", decimals, self.mean, decimals, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 1], &[0, 1, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 1, 1, 0]).unwrap(), 0.5);
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &x).unwrap().rho, 1.0);
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().rho, -1.0);
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &x).unwrap().rho;
        assert!((r - 0.9f64.sqrt()).abs() < 1e-12, "{r}");
        let d = spearman(&[0.5; 4], &x).unwrap();
        assert!(d.degenerate && d.rho == 0.0);
    }

    #[test]
    fn ranks_share_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn aggregate_sample_std() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.mean, 2.5);
        assert!((a.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Aggregate::of(&[0.7]).std, 0.0);
        assert_eq!(a.display(2), "2.50 ± 1.29");
    }
}
