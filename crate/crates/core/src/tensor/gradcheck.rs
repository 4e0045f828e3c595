//! Central-difference gradient checking in double precision.
//!
//! A [`GradTarget`] exposes a flat vector of variables (parameters and
//! inputs), a scalar loss, and the analytic gradient of that loss. The
//! fragments in this module wrap each layer with a fixed random linear
//! read-out so every output element receives a distinct upstream gradient.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::activation::{relu, relu_backward, softmax, softmax_backward};
use super::conv::{conv2d, conv2d_backward, ConvGeometry};
use super::dense::{dense, dense_backward};
use super::dropout::{dropout, dropout_backward, Mode};
use super::loss::{loss, loss_grad, LossKind};
use super::lrn::{lrn_backward, lrn_cached, LrnParams};
use super::lstm::{lstm_step_backward, lstm_step_cached, LstmState};
use super::pool::{maxpool2d_backward, maxpool2d_indexed};
use super::{LayerParams, ParamGrad, Tensor};

pub trait GradTarget {
    fn variables(&self) -> Vec<f64>;
    fn set_variables(&mut self, values: &[f64]);
    fn loss(&mut self) -> f64;
    /// Loss and d(loss)/d(variables), in `variables()` order.
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>);
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Above this many variables a random subset of this size is checked.
    pub max_checks: usize,
    /// Denominator floor for the relative error so that two near-zero
    /// gradients compare on an absolute scale.
    pub floor: f64,
    /// A mismatching variable is re-differenced at `step / 10^k` for
    /// `k = 1..=refinements` and fails only if every step mismatches. A
    /// finite difference straddling a ReLU or max-pool switch point is
    /// wrong at one step but not at smaller ones; a wrong backward pass
    /// is wrong at all of them.
    pub refinements: u32,
    pub seed: u64,
}

impl GradCheckConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_checks: 4096,
            floor: 1e-6,
            refinements: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub total: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub failures: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn central_difference<T: GradTarget + ?Sized>(target: &mut T, vars: &mut [f64], i: usize, step: f64) -> f64 {
    let x = vars[i];
    vars[i] = x + step;
    target.set_variables(vars);
    let plus = target.loss();
    vars[i] = x - step;
    target.set_variables(vars);
    let minus = target.loss();
    vars[i] = x;
    (plus - minus) / (2.0 * step)
}

pub fn grad_check<T: GradTarget + ?Sized>(target: &mut T, cfg: &GradCheckConfig) -> GradCheckReport {
    let base = target.variables();
    let (_, analytic) = target.loss_and_grad();
    assert_eq!(analytic.len(), base.len(), "gradient length must match variables");
    let total = base.len();
    let indices: Vec<usize> = if total > cfg.max_checks {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = sample(&mut rng, total, cfg.max_checks).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..total).collect()
    };
    let mut vars = base.clone();
    let mut max_rel = 0.0f64;
    let mut failures = Vec::new();
    for &i in &indices {
        let mut step = cfg.step;
        let mut numeric = central_difference(target, &mut vars, i, step);
        let mut rel = relative_error(analytic[i], numeric, cfg.floor);
        for _ in 0..cfg.refinements {
            if rel < cfg.tolerance {
                break;
            }
            step /= 10.0;
            numeric = central_difference(target, &mut vars, i, step);
            rel = relative_error(analytic[i], numeric, cfg.floor);
        }
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        max_rel = max_rel.max(rel);
        if rel >= cfg.tolerance {
            failures.push(GradCheckEntry {
                index: i,
                analytic: analytic[i],
                numeric,
                rel_error: rel,
            });
        }
    }
    target.set_variables(&base);
    GradCheckReport {
        checked: indices.len(),
        total,
        max_rel_error: max_rel,
        tolerance: cfg.tolerance,
        failures,
    }
}

/// Negative control: reports the negated analytic gradient.
pub struct SignFlipped<T>(pub T);

impl<T: GradTarget> GradTarget for SignFlipped<T> {
    fn variables(&self) -> Vec<f64> {
        self.0.variables()
    }
    fn set_variables(&mut self, values: &[f64]) {
        self.0.set_variables(values)
    }
    fn loss(&mut self) -> f64 {
        self.0.loss()
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let (l, g) = self.0.loss_and_grad();
        (l, g.into_iter().map(|v| -v).collect())
    }
}

// ---- flattening helpers -------------------------------------------------

fn push_all(out: &mut Vec<f64>, ts: &[&Tensor<f64>]) {
    for t in ts {
        out.extend_from_slice(t.data());
    }
}

fn load_all(values: &[f64], ts: &mut [&mut Tensor<f64>]) {
    let mut off = 0;
    for t in ts.iter_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&values[off..off + n]);
        off += n;
    }
    assert_eq!(off, values.len(), "variable count mismatch");
}

fn readout(out: &Tensor<f64>, proj: &Tensor<f64>) -> f64 {
    out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

fn uniform(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

// ---- fragments ------------------------------------------------------------

pub struct DenseFragment {
    pub input: Tensor<f64>,
    pub params: LayerParams<f64>,
    pub proj: Tensor<f64>,
}

impl DenseFragment {
    pub fn random(rng: &mut impl Rng, d: usize, m: usize) -> Self {
        Self {
            input: uniform(rng, &[d], 1.0),
            params: LayerParams::new(uniform(rng, &[m, d], 1.0), uniform(rng, &[m], 1.0)),
            proj: uniform(rng, &[m], 1.0),
        }
    }
}

impl GradTarget for DenseFragment {
    fn variables(&self) -> Vec<f64> {
        let mut v = Vec::new();
        push_all(&mut v, &[&self.params.weight, &self.params.bias, &self.input]);
        v
    }
    fn set_variables(&mut self, values: &[f64]) {
        load_all(values, &mut [&mut self.params.weight, &mut self.params.bias, &mut self.input]);
    }
    fn loss(&mut self) -> f64 {
        readout(&dense(&self.input, &self.params).unwrap(), &self.proj)
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let out = dense(&self.input, &self.params).unwrap();
        let mut g = ParamGrad::zeros_like(&self.params);
        let gin = dense_backward(&self.input, &self.params, &self.proj, &mut g).unwrap();
        let mut v = Vec::new();
        push_all(&mut v, &[&g.weight, &g.bias, &gin]);
        (readout(&out, &self.proj), v)
    }
}

pub struct ConvFragment {
    pub input: Tensor<f64>,
    pub params: LayerParams<f64>,
    pub geom: ConvGeometry,
    pub proj: Tensor<f64>,
}

impl ConvFragment {
    /// `dims` = (channels, height, width, filters, kernel).
    pub fn random(rng: &mut impl Rng, dims: (usize, usize, usize, usize, usize), geom: ConvGeometry) -> Self {
        let (c, h, w, co, k) = dims;
        let input = uniform(rng, &[c, h, w], 1.0);
        let params = LayerParams::new(uniform(rng, &[co, c, k, k], 1.0), uniform(rng, &[co], 1.0));
        let out = conv2d(&input, &params, geom).expect("fragment geometry");
        let proj = uniform(rng, out.shape(), 1.0);
        Self {
            input,
            params,
            geom,
            proj,
        }
    }
}

impl GradTarget for ConvFragment {
    fn variables(&self) -> Vec<f64> {
        let mut v = Vec::new();
        push_all(&mut v, &[&self.params.weight, &self.params.bias, &self.input]);
        v
    }
    fn set_variables(&mut self, values: &[f64]) {
        load_all(values, &mut [&mut self.params.weight, &mut self.params.bias, &mut self.input]);
    }
    fn loss(&mut self) -> f64 {
        readout(&conv2d(&self.input, &self.params, self.geom).unwrap(), &self.proj)
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let out = conv2d(&self.input, &self.params, self.geom).unwrap();
        let mut g = ParamGrad::zeros_like(&self.params);
        let gin = conv2d_backward(&self.input, &self.params, self.geom, &self.proj, &mut g).unwrap();
        let mut v = Vec::new();
        push_all(&mut v, &[&g.weight, &g.bias, &gin]);
        (readout(&out, &self.proj), v)
    }
}

pub struct PoolFragment {
    pub input: Tensor<f64>,
    pub k: usize,
    pub stride: usize,
    pub proj: Tensor<f64>,
}

impl PoolFragment {
    pub fn random(rng: &mut impl Rng, shape: [usize; 3], k: usize, stride: usize) -> Self {
        let input = uniform(rng, &shape, 1.0);
        let out = maxpool2d_indexed(&input, k, stride).expect("fragment geometry").output;
        let proj = uniform(rng, out.shape(), 1.0);
        Self { input, k, stride, proj }
    }
}

impl GradTarget for PoolFragment {
    fn variables(&self) -> Vec<f64> {
        self.input.data().to_vec()
    }
    fn set_variables(&mut self, values: &[f64]) {
        load_all(values, &mut [&mut self.input]);
    }
    fn loss(&mut self) -> f64 {
        readout(&maxpool2d_indexed(&self.input, self.k, self.stride).unwrap().output, &self.proj)
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let p = maxpool2d_indexed(&self.input, self.k, self.stride).unwrap();
        let gin = maxpool2d_backward(self.input.shape(), &p.argmax, &self.proj).unwrap();
        (readout(&p.output, &self.proj), gin.into_data())
    }
}

pub struct LrnFragment {
    pub input: Tensor<f64>,
    pub params: LrnParams,
    pub proj: Tensor<f64>,
}

impl LrnFragment {
    pub fn random(rng: &mut impl Rng, shape: [usize; 3], params: LrnParams) -> Self {
        Self {
            input: uniform(rng, &shape, 3.0),
            params,
            proj: uniform(rng, &shape, 1.0),
        }
    }
}

impl GradTarget for LrnFragment {
    fn variables(&self) -> Vec<f64> {
        self.input.data().to_vec()
    }
    fn set_variables(&mut self, values: &[f64]) {
        load_all(values, &mut [&mut self.input]);
    }
    fn loss(&mut self) -> f64 {
        readout(&lrn_cached(&self.input, &self.params).unwrap().output, &self.proj)
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let n = lrn_cached(&self.input, &self.params).unwrap();
        let gin = lrn_backward(&self.input, &n.denom, &self.params, &self.proj).unwrap();
        (readout(&n.output, &self.proj), gin.into_data())
    }
}

pub struct ReluFragment {
    pub input: Tensor<f64>,
    pub proj: Tensor<f64>,
}

impl ReluFragment {
    pub fn random(rng: &mut impl Rng, n: usize) -> Self {
        // keep inputs away from the kink at 0
        let input = Tensor::from_fn(&[n], |_| {
            let v: f64 = rng.random_range(0.1..2.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        });
        Self {
            input,
            proj: uniform(rng, &[n], 1.0),
        }
    }
}

impl GradTarget for ReluFragment {
    fn variables(&self) -> Vec<f64> {
        self.input.data().to_vec()
    }
    fn set_variables(&mut self, values: &[f64]) {
        load_all(values, &mut [&mut self.input]);
    }
    fn loss(&mut self) -> f64 {
        readout(&relu(&self.input), &self.proj)
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let out = relu(&self.input);
        let gin = relu_backward(&self.input, &self.proj).unwrap();
        (readout(&out, &self.proj), gin.into_data())
    }
}

/// Dropout with a mask redrawn from the same seed on every evaluation.
pub struct DropoutFragment {
    pub input: Tensor<f64>,
    pub ratio: f64,
    pub seed: u64,
    pub proj: Tensor<f64>,
}

impl DropoutFragment {
    pub fn random(rng: &mut impl Rng, n: usize, ratio: f64) -> Self {
        Self {
            input: uniform(rng, &[n], 1.0),
            ratio,
            seed: rng.random(),
            proj: uniform(rng, &[n], 1.0),
        }
    }
}

impl GradTarget for DropoutFragment {
    fn variables(&self) -> Vec<f64> {
        self.input.data().to_vec()
    }
    fn set_variables(&mut self, values: &[f64]) {
        load_all(values, &mut [&mut self.input]);
    }
    fn loss(&mut self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        readout(&dropout(&self.input, self.ratio, Mode::Train, &mut rng).unwrap().output, &self.proj)
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let d = dropout(&self.input, self.ratio, Mode::Train, &mut rng).unwrap();
        let gin = dropout_backward(d.mask.as_ref(), &self.proj);
        (readout(&d.output, &self.proj), gin.into_data())
    }
}

/// Softmax followed by a two-class loss; variables are the logits.
pub struct SoftmaxLossFragment {
    pub logits: Tensor<f64>,
    pub label: u8,
    pub kind: LossKind,
}

impl GradTarget for SoftmaxLossFragment {
    fn variables(&self) -> Vec<f64> {
        self.logits.data().to_vec()
    }
    fn set_variables(&mut self, values: &[f64]) {
        load_all(values, &mut [&mut self.logits]);
    }
    fn loss(&mut self) -> f64 {
        loss(&softmax(&self.logits), self.label, self.kind).unwrap()
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let p = softmax(&self.logits);
        let l = loss(&p, self.label, self.kind).unwrap();
        let gp = loss_grad(&p, self.label, self.kind).unwrap();
        (l, softmax_backward(&p, &gp).unwrap().into_data())
    }
}

/// An LSTM unrolled over a sequence; the read-out touches every hidden
/// state and the final cell so that gradients cross all time steps.
pub struct LstmFragment {
    pub inputs: Vec<Tensor<f64>>,
    pub init: LstmState<f64>,
    pub params: LayerParams<f64>,
    pub proj_hidden: Vec<Tensor<f64>>,
    pub proj_cell: Tensor<f64>,
}

impl LstmFragment {
    pub fn random(rng: &mut impl Rng, d: usize, h: usize, steps: usize) -> Self {
        Self {
            inputs: (0..steps).map(|_| uniform(rng, &[d], 1.0)).collect(),
            init: LstmState {
                hidden: uniform(rng, &[h], 0.5),
                cell: uniform(rng, &[h], 0.5),
            },
            params: LayerParams::new(uniform(rng, &[4 * h, d + h], 0.5), uniform(rng, &[4 * h], 0.5)),
            proj_hidden: (0..steps).map(|_| uniform(rng, &[h], 1.0)).collect(),
            proj_cell: uniform(rng, &[h], 1.0),
        }
    }

    fn forward(&self) -> (f64, Vec<super::lstm::LstmCache<f64>>) {
        let mut state = self.init.clone();
        let mut caches = Vec::new();
        let mut total = 0.0;
        for (x, proj) in self.inputs.iter().zip(&self.proj_hidden) {
            let (next, cache) = lstm_step_cached(x, &state, &self.params).unwrap();
            total += readout(&next.hidden, proj);
            caches.push(cache);
            state = next;
        }
        total += readout(&state.cell, &self.proj_cell);
        (total, caches)
    }
}

impl GradTarget for LstmFragment {
    fn variables(&self) -> Vec<f64> {
        let mut v = Vec::new();
        push_all(&mut v, &[&self.params.weight, &self.params.bias, &self.init.hidden, &self.init.cell]);
        for x in &self.inputs {
            v.extend_from_slice(x.data());
        }
        v
    }
    fn set_variables(&mut self, values: &[f64]) {
        let mut refs: Vec<&mut Tensor<f64>> = vec![
            &mut self.params.weight,
            &mut self.params.bias,
            &mut self.init.hidden,
            &mut self.init.cell,
        ];
        refs.extend(self.inputs.iter_mut());
        load_all(values, &mut refs);
    }
    fn loss(&mut self) -> f64 {
        self.forward().0
    }
    fn loss_and_grad(&mut self) -> (f64, Vec<f64>) {
        let (total, caches) = self.forward();
        let h = self.init.size();
        let mut g = ParamGrad::zeros_like(&self.params);
        let mut dh_next = Tensor::zeros(&[h]);
        let mut dc_next = self.proj_cell.clone();
        let mut dxs = vec![Tensor::zeros(&[1]); caches.len()];
        for t in (0..caches.len()).rev() {
            let mut dh = self.proj_hidden[t].clone();
            dh.add_assign(&dh_next);
            let step = lstm_step_backward(&caches[t], &self.params, &dh, &dc_next, &mut g).unwrap();
            dxs[t] = step.input;
            dh_next = step.hidden;
            dc_next = step.cell;
        }
        let mut v = Vec::new();
        push_all(&mut v, &[&g.weight, &g.bias, &dh_next, &dc_next]);
        for dx in &dxs {
            v.extend_from_slice(dx.data());
        }
        (total, v)
    }
}
