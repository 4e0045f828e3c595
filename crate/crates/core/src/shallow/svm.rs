//! RBF-kernel SVM trained by SMO, with Platt-scaled probabilities.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::logreg::sigmoid;
use super::{check_rows, check_two_classes};
use crate::error::{Error, Result};

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dataset label {0, 1} to SVM label {-1, +1}.
pub fn to_svm_label(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

pub fn from_svm_label(y: f64) -> u8 {
    u8::from(y > 0.0)
}

pub fn kernel_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf_kernel(&x[i], &x[j], gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoOptions {
    pub c: f64,
    pub tol: f64,
    /// Iteration cap is `max_passes * n`.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i alpha_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective `sum(alpha) - alpha^T Q alpha / 2`, sampled every `n` iterations and at the end.
    pub dual_history: Vec<f64>,
}

/// `sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij`.
pub fn dual_objective(k: &[f64], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i * n + j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Picks uniformly among the indices attaining the extreme value.
fn pick<R: Rng>(cands: &[usize], rng: &mut R) -> Option<usize> {
    cands.choose(rng).copied()
}

/// Solves the C-SVM dual with maximal-violating-pair working sets, on a
/// precomputed kernel matrix.
pub fn smo_solve(k: &[f64], y: &[f64], opts: &SmoOptions) -> Result<SmoSolution> {
    let n = y.len();
    if k.len() != n * n {
        return Err(Error::shape("kernel matrix does not match label count"));
    }
    if !(opts.c > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::invalid("C and tol must be positive"));
    }
    let c = opts.c;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut alpha = vec![0.0; n];
    // gradient of the minimisation form 0.5 a^T Q a - e^T a
    let mut grad = vec![-1.0; n];
    let is_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let is_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);
    let cap = opts.max_passes.saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut converged = false;
    let mut history = Vec::new();
    let mut cands = Vec::new();
    while iterations < cap {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(t, &alpha) && v > gmax {
                gmax = v;
            }
            if is_low(t, &alpha) && v < gmin {
                gmin = v;
            }
        }
        if gmax - gmin < opts.tol {
            converged = true;
            break;
        }
        cands.clear();
        cands.extend((0..n).filter(|&t| is_up(t, &alpha) && -y[t] * grad[t] == gmax));
        let i = pick(&cands, &mut rng).expect("nonempty up set");
        cands.clear();
        cands.extend((0..n).filter(|&t| is_low(t, &alpha) && -y[t] * grad[t] == gmin && t != i));
        let Some(j) = pick(&cands, &mut rng) else {
            converged = true;
            break;
        };

        let (kii, kjj, kij) = (k[i * n + i], k[j * n + j], k[i * n + j]);
        let quad = (kii + kjj - 2.0 * kij).max(1e-12);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[t * n + i] * di + y[j] * k[t * n + j] * dj);
        }
        iterations += 1;
        if iterations % n == 0 {
            history.push(dual_objective(k, y, &alpha));
        }
    }
    history.push(dual_objective(k, y, &alpha));
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without meeting tol {}", opts.tol);
    }
    let rho = compute_rho(y, &alpha, &grad, c);
    Ok(SmoSolution {
        alpha,
        rho,
        iterations,
        converged,
        dual_history: history,
    })
}

/// Mean of `y_i G_i` over free variables, else the midpoint of the feasible interval.
fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Sigmoid fit `p = 1 / (1 + exp(A s + B))` by the Newton method with
/// backtracking of Lin, Lin and Weng.
pub fn platt_fit(scores: &[f64], labels: &[u8]) -> (f64, f64) {
    let prior1 = labels.iter().filter(|&&l| l == 1).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels.iter().map(|&l| if l == 1 { hi } else { lo }).collect();
    let (min_step, sigma, eps) = (1e-10, 1e-12, 1e-5);
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let fval = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&t)
            .map(|(&s, &ti)| {
                let f = s * a + b;
                if f >= 0.0 {
                    ti * f + (-f).exp().ln_1p()
                } else {
                    (ti - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut fv = fval(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&s, &ti) in scores.iter().zip(&t) {
            let f = s * a + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = ti - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = fval(na, nb);
            if nf < fv + 1e-4 * step * gd {
                (a, b, fv) = (na, nb, nf);
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    (a, b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub platt: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    /// `None` means `1 / dim`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_passes: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmReport {
    pub iterations: usize,
    pub converged: bool,
    pub dual_history: Vec<f64>,
    /// Whether Platt was fitted on training scores because a CV fold lacked a class.
    pub platt_on_training_scores: bool,
}

fn fit_dual(x: &[Vec<f64>], y: &[f64], gamma: f64, opts: &SvmOptions, seed: u64) -> Result<(SmoSolution, Vec<f64>)> {
    let k = kernel_matrix(x, gamma);
    let smo = SmoOptions {
        c: opts.c,
        tol: opts.tol,
        max_passes: opts.max_passes,
        seed,
    };
    let sol = smo_solve(&k, y, &smo)?;
    Ok((sol, k))
}

fn build(x: &[Vec<f64>], y: &[f64], sol: &SmoSolution, gamma: f64, c: f64) -> SvmModel {
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x[i].clone());
            dual_coef.push(a * y[i]);
        }
    }
    SvmModel {
        support_vectors,
        dual_coef,
        bias: -sol.rho,
        gamma,
        c,
        platt: (-1.0, 0.0),
    }
}

/// Trains on `labels` in {0, 1}. Platt parameters come from decision values
/// of three internal folds; if a fold's training part has a single class the
/// full model's training scores are used instead.
pub fn svm_train(x: &[Vec<f64>], labels: &[u8], opts: &SvmOptions) -> Result<(SvmModel, SvmReport)> {
    let d = check_rows(x, labels)?;
    check_two_classes(labels)?;
    let gamma = opts.gamma.unwrap_or(1.0 / d.max(1) as f64);
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma {gamma} must be positive")));
    }
    let y: Vec<f64> = labels.iter().map(|&l| to_svm_label(l)).collect();
    let (sol, _) = fit_dual(x, &y, gamma, opts, opts.seed)?;
    let mut model = build(x, &y, &sol, gamma, opts.c);

    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x706c_6174_74);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut cv_scores = vec![0.0; n];
    let mut fallback = n < 3;
    if !fallback {
        for fold in 0..3 {
            let test: Vec<usize> = perm.iter().copied().skip(fold).step_by(3).collect();
            let train: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
            let tl: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
            if !tl.contains(&0) || !tl.contains(&1) {
                fallback = true;
                break;
            }
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<f64> = tl.iter().map(|&l| to_svm_label(l)).collect();
            let (s, _) = fit_dual(&tx, &ty, gamma, opts, opts.seed.wrapping_add(fold as u64 + 1))?;
            let sub = build(&tx, &ty, &s, gamma, opts.c);
            for &i in &test {
                cv_scores[i] = sub.decision(&x[i])?;
            }
        }
    }
    if fallback {
        for i in 0..n {
            cv_scores[i] = model.decision(&x[i])?;
        }
    }
    let (mut a, b) = platt_fit(&cv_scores, labels);
    if a >= 0.0 {
        log::warn!("Platt slope {a} is not negative; clamping");
        a = -1e-6;
    }
    model.platt = (a, b);
    let report = SvmReport {
        iterations: sol.iterations,
        converged: sol.converged,
        dual_history: sol.dual_history,
        platt_on_training_scores: fallback,
    };
    Ok((model, report))
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if !self.support_vectors.is_empty() && x.len() != self.dim() {
            return Err(Error::shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, &c)| c * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias)
    }

    /// `[1 - p, p]` with `p = sigmoid(-(A s + B))`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        let s = self.decision(x)?;
        let p = sigmoid(-(self.platt.0 * s + self.platt.1));
        Ok([1.0 - p, p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_identities() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 3.0), 1.0);
        let d = 2f64.ln().sqrt();
        assert!((rbf_kernel(&[0.0], &[d], 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn label_maps_round_trip() {
        for l in [0u8, 1] {
            assert_eq!(from_svm_label(to_svm_label(l)), l);
        }
    }

    #[test]
    fn two_points_bisector() {
        let x = vec![vec![0.0, 0.0], vec![2.0, 1.0]];
        let y = vec![0u8, 1];
        let opts = SvmOptions { c: 1e3, gamma: Some(0.5), tol: 1e-9, ..SvmOptions::default() };
        let (m, rep) = svm_train(&x, &y, &opts).unwrap();
        assert!(rep.converged);
        assert_eq!(m.dual_coef.len(), 2);
        assert!((m.dual_coef[0] + m.dual_coef[1]).abs() < 1e-12);
        assert!(m.decision(&[1.0, 0.5]).unwrap().abs() < 1e-6);
        assert!(m.predict_proba(&[1.5, 1.0]).unwrap()[1] > 0.5);
        assert!(m.predict_proba(&[0.5, 0.0]).unwrap()[1] < 0.5);
    }

    #[test]
    fn xor_is_separated() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![0u8, 0, 1, 1];
        let opts = SvmOptions { c: 10.0, gamma: Some(1.0), ..SvmOptions::default() };
        let (m, _) = svm_train(&x, &y, &opts).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(from_svm_label(m.decision(xi).unwrap()), yi);
        }
    }

    #[test]
    fn platt_zero_score_is_even() {
        let m = SvmModel {
            support_vectors: vec![vec![0.0]],
            dual_coef: vec![0.0],
            bias: 0.0,
            gamma: 1.0,
            c: 1.0,
            platt: (-1.0, 0.0),
        };
        assert_eq!(m.predict_proba(&[3.0]).unwrap(), [0.5, 0.5]);
        assert!(m.predict_proba(&[3.0, 1.0]).is_err());
    }

    #[test]
    fn platt_slope_is_negative_for_informative_scores() {
        let scores: Vec<f64> = (0..40).map(|i| i as f64 / 10.0 - 2.0).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i >= 18 && i != 25)).collect();
        let (a, _) = platt_fit(&scores, &labels);
        assert!(a < 0.0);
    }
}
