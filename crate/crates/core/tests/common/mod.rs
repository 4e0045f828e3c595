//! Independent brute-force reference implementations shared by test targets.
#![allow(dead_code)]

use popcast::eval::spearman;
use popcast::frame::Frame;
use popcast::lrcn::LrcnModel;
use popcast::tensor::activation::{relu, softmax};
use popcast::tensor::dense::dense;
use popcast::tensor::lrn::lrn;
use popcast::shallow::{kernel_matrix, smo_solve, SmoOptions};
use popcast::tensor::conv::{conv2d, ConvGeometry};
use popcast::tensor::gradcheck::{
    grad_check, ConvFragment, DenseFragment, DropoutFragment, GradCheckConfig, GradCheckReport, LrnFragment,
    LstmFragment, PoolFragment, ReluFragment, SoftmaxLossFragment,
};
use popcast::tensor::loss::LossKind;
use popcast::tensor::lrn::LrnParams;
use popcast::tensor::lstm::{lstm_step, LstmState};
use popcast::tensor::pool::maxpool2d;
use popcast::{LayerParams, Tensor};
use rand::Rng;

/// Direct convolution: every output is the explicit sum over the kernel
/// window with zero padding checked per tap.
pub fn conv2d_naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let xv = |ci: usize, y: i64, xx: i64| -> f64 {
        if y < 0 || xx < 0 || y >= h as i64 || xx >= wd as i64 {
            0.0
        } else {
            x.data()[ci * h * wd + y as usize * wd + xx as usize]
        }
    };
    let mut out = vec![0.0; co * ho * wo];
    for o in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = b.data()[o];
                for ci in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let y = (oy * stride + ky) as i64 - pad as i64;
                            let xx = (ox * stride + kx) as i64 - pad as i64;
                            s += w.data()[((o * c + ci) * kh + ky) * kw + kx] * xv(ci, y, xx);
                        }
                    }
                }
                out[(o * ho + oy) * wo + ox] = s;
            }
        }
    }
    Tensor::new(vec![co, ho, wo], out).unwrap()
}

pub fn maxpool_naive(x: &Tensor<f64>, k: usize, stride: usize) -> Tensor<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let mut out = Vec::new();
    for ci in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..k {
                    for dx in 0..k {
                        m = m.max(x.data()[ci * h * w + (oy * stride + dy) * w + ox * stride + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out).unwrap()
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One LSTM step from the gate equations, with weights packed `[4H, D+H]`
/// in gate order input, forget, output, candidate.
pub fn lstm_naive(x: &[f64], h: &[f64], c: &[f64], w: &Tensor<f64>, b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let z: Vec<f64> = x.iter().chain(h).copied().collect();
    let row = |r: usize| -> f64 { b[r] + (0..z.len()).map(|k| w.data()[r * z.len() + k] * z[k]).sum::<f64>() };
    let mut hn = vec![0.0; hd];
    let mut cn = vec![0.0; hd];
    for j in 0..hd {
        let i = sig(row(j));
        let f = sig(row(hd + j));
        let o = sig(row(2 * hd + j));
        let g = row(3 * hd + j).tanh();
        cn[j] = f * c[j] + i * g;
        hn[j] = o * cn[j].tanh();
    }
    (hn, cn)
}

/// Average ranks by counting, then the textbook Pearson formula.
pub fn spearman_naive(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let eq = v.iter().filter(|&&y| y == x).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// Euclidean projection onto `{0 <= a <= c, y . a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { v.iter().zip(y).map(|(&vi, &yi)| (vi - nu * yi).clamp(0.0, c)).collect() };
    let slack = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slack(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximises `sum(a) - a^T Q a / 2` over the SVM dual feasible set by
/// accelerated projected gradient ascent. Returns the objective value.
pub fn svm_dual_oracle(k: &[f64], y: &[f64], c: f64, iters: usize) -> f64 {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let lmax = (0..n).map(|i| (0..n).map(|j| q(i, j).abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lmax;
    let obj = |a: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * a[j] * q(i, j);
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q(i, j) * z[j]).sum::<f64>()).collect();
        let next = project(&z.iter().zip(&grad).map(|(zi, g)| zi + step * g).collect::<Vec<_>>(), y, c);
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next.iter().zip(&a).map(|(n1, a0)| n1 + (t - 1.0) / tn * (n1 - a0)).collect();
        a = next;
        t = tn;
    }
    obj(&a)
}

fn uniform(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random geometry whose kernel tiles the padded input exactly.
pub fn conv_oracle_error(rng: &mut impl Rng) -> f64 {
    loop {
        let (stride, pad, k) = (rng.random_range(1..=3), rng.random_range(0..=2), rng.random_range(1..=4));
        let ho = rng.random_range(1..=5);
        let wo = rng.random_range(1..=5);
        let h = ((ho - 1) * stride + k) as i64 - 2 * pad as i64;
        let w = ((wo - 1) * stride + k) as i64 - 2 * pad as i64;
        if h < 1 || w < 1 {
            continue;
        }
        let (c, co) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let x = uniform(rng, &[c, h as usize, w as usize], 1.0);
        let p = LayerParams::new(uniform(rng, &[co, c, k, k], 1.0), uniform(rng, &[co], 1.0));
        let got = conv2d(&x, &p, ConvGeometry::new(stride, pad)).unwrap();
        let want = conv2d_naive(&x, &p.weight, &p.bias, stride, pad);
        assert_eq!(got.shape(), want.shape());
        return max_abs_diff(got.data(), want.data());
    }
}

pub fn pool_oracle_error(rng: &mut impl Rng) -> f64 {
    let k = rng.random_range(1..=3);
    let stride = rng.random_range(1..=3);
    let shape = [rng.random_range(1..=3), rng.random_range(k..k + 6), rng.random_range(k..k + 6)];
    let x = uniform(rng, &shape, 1.0);
    let got = maxpool2d(&x, k, stride).unwrap();
    let want = maxpool_naive(&x, k, stride);
    assert_eq!(got.shape(), want.shape());
    max_abs_diff(got.data(), want.data())
}

pub fn lstm_oracle_error(rng: &mut impl Rng) -> f64 {
    let (d, h) = (rng.random_range(1..=5), rng.random_range(1..=4));
    let x = uniform(rng, &[d], 1.0);
    let state = LstmState {
        hidden: uniform(rng, &[h], 1.0),
        cell: uniform(rng, &[h], 1.0),
    };
    let p = LayerParams::new(uniform(rng, &[4 * h, d + h], 1.0), uniform(rng, &[4 * h], 1.0));
    let got = lstm_step(&x, &state, &p).unwrap();
    let (hn, cn) = lstm_naive(x.data(), state.hidden.data(), state.cell.data(), &p.weight, p.bias.data());
    max_abs_diff(got.hidden.data(), &hn).max(max_abs_diff(got.cell.data(), &cn))
}

/// Integer-valued inputs so that ties are frequent.
pub fn spearman_oracle_error(rng: &mut impl Rng) -> f64 {
    let n = rng.random_range(2..=25);
    loop {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0f64).round()).collect();
        let got = spearman(&a, &b).unwrap();
        if got.degenerate {
            continue;
        }
        return (got.rho - spearman_naive(&a, &b)).abs();
    }
}

/// |SMO dual objective - projected-gradient oracle| on a random RBF problem.
pub fn smo_oracle_gap(rng: &mut impl Rng, seed: u64) -> f64 {
    let n = 20;
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let k = kernel_matrix(&x, rng.random_range(0.1..2.0));
    let c = rng.random_range(0.1..10.0);
    let sol = smo_solve(&k, &y, &SmoOptions { c, tol: 1e-6, max_passes: 10_000, seed }).unwrap();
    let smo = *sol.dual_history.last().unwrap();
    (smo - svm_dual_oracle(&k, &y, c, 20_000)).abs()
}

/// Finite-difference checks of every layer primitive at `tolerance`.
pub fn layer_gradchecks(rng: &mut impl Rng, tolerance: f64) -> Vec<(&'static str, GradCheckReport)> {
    let cfg = GradCheckConfig::with_tolerance(tolerance);
    let mut out = Vec::new();
    out.push(("dense", grad_check(&mut DenseFragment::random(rng, 5, 4), &cfg)));
    out.push((
        "conv2d",
        grad_check(&mut ConvFragment::random(rng, (2, 5, 5, 3, 3), ConvGeometry::new(1, 1)), &cfg),
    ));
    out.push((
        "conv2d-strided",
        grad_check(&mut ConvFragment::random(rng, (2, 7, 7, 2, 3), ConvGeometry::new(2, 0)), &cfg),
    ));
    out.push(("maxpool2d", grad_check(&mut PoolFragment::random(rng, [2, 6, 6], 2, 2), &cfg)));
    out.push(("maxpool2d-overlap", grad_check(&mut PoolFragment::random(rng, [2, 7, 7], 3, 2), &cfg)));
    out.push(("lrn", grad_check(&mut LrnFragment::random(rng, [7, 3, 3], LrnParams { alpha: 0.5, ..LrnParams::default() }), &cfg)));
    out.push(("relu", grad_check(&mut ReluFragment::random(rng, 12), &cfg)));
    out.push(("dropout", grad_check(&mut DropoutFragment::random(rng, 12, 0.4), &cfg)));
    for kind in [LossKind::CrossEntropy, LossKind::Squared] {
        for label in [0u8, 1] {
            let mut f = SoftmaxLossFragment {
                logits: uniform(rng, &[2], 2.0),
                label,
                kind,
            };
            out.push(("softmax-loss", grad_check(&mut f, &cfg)));
        }
    }
    out.push(("lstm", grad_check(&mut LstmFragment::random(rng, 3, 4, 4), &cfg)));
    out
}

/// Hand-unrolled reference built only from the layer primitives.
pub fn manual_forward(m: &LrcnModel<f64>, frames: &[Tensor<f64>]) -> [f64; 2] {
    let cfg = m.config();
    let g = |i: usize| ConvGeometry::new(cfg.conv[i].stride, cfg.conv[i].pad);
    let pool = |x: &Tensor<f64>| maxpool2d(x, cfg.pool.kernel, cfg.pool.stride).unwrap();
    let mut state = LstmState::zeros(cfg.lstm_hidden);
    let mut acc = [0.0; 2];
    for f in frames {
        let mut x = lrn(&pool(&relu(&conv2d(f, &m.conv[0], g(0)).unwrap())), &cfg.lrn).unwrap();
        x = lrn(&pool(&relu(&conv2d(&x, &m.conv[1], g(1)).unwrap())), &cfg.lrn).unwrap();
        x = relu(&conv2d(&x, &m.conv[2], g(2)).unwrap());
        x = relu(&conv2d(&x, &m.conv[3], g(3)).unwrap());
        x = pool(&relu(&conv2d(&x, &m.conv[4], g(4)).unwrap()));
        let h1 = relu(&dense(&x.flatten(), &m.fc1).unwrap());
        state = lstm_step(&h1, &state, &m.lstm).unwrap();
        let p = softmax(&dense(&state.hidden, &m.fc2).unwrap());
        acc[0] += p.data()[0] / frames.len() as f64;
        acc[1] += p.data()[1] / frames.len() as f64;
    }
    acc
}

/// Materialises every crop by hand and averages the per-view outputs.
pub fn brute_force_predict(model: &LrcnModel<f64>, frames: &[Frame]) -> [f64; 2] {
    let cfg = model.config();
    let (sh, sw) = (frames[0].height(), frames[0].width());
    let (ch, cw) = (cfg.input_crop.height, cfg.input_crop.width);
    let mut offsets = vec![(0, 0), (0, sw - cw), (sh - ch, 0), (sh - ch, sw - cw), ((sh - ch) / 2, (sw - cw) / 2)];
    offsets.extend(offsets.clone());
    let mut acc = [0.0; 2];
    for (k, (top, left)) in offsets.into_iter().enumerate() {
        let view: Vec<Tensor<f64>> = frames
            .iter()
            .map(|f| {
                Tensor::from_fn(&[3, ch, cw], |i| {
                    let (c, y, x) = (i / (ch * cw), (i / cw) % ch, i % cw);
                    let sx = if k >= 5 { left + cw - 1 - x } else { left + x };
                    f.pixel(sx, top + y)[c] as f64 / 255.0 - cfg.input_mean
                })
            })
            .collect();
        let p = manual_forward(model, &view);
        acc[0] += p[0] / 10.0;
        acc[1] += p[1] / 10.0;
    }
    acc
}
