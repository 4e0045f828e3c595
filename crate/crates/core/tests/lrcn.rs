mod common;

use popcast::frame::Frame;
use popcast::lrcn::{
    predict, tta_crops, train, ConvLayerSpec, CropPlan, FrameShape, LabeledFrames, LrcnConfig, LrcnGradTarget,
    LrcnModel, PoolSpec,
};
use popcast::tensor::dropout::Mode;
use popcast::tensor::gradcheck::{grad_check, GradCheckConfig};
use popcast::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> LrcnConfig {
    LrcnConfig {
        frames_per_video: 3,
        input_crop: FrameShape::new(8, 8, 1),
        source_frame_size: FrameShape::new(8, 8, 1),
        conv: vec![ConvLayerSpec::new(2, 3, 1, 1); 5],
        pool: PoolSpec { kernel: 2, stride: 2 },
        fc1_width: 4,
        lstm_hidden: 3,
        ..LrcnConfig::mini()
    }
}

fn random_frames(rng: &mut impl Rng, n: usize, shape: [usize; 3]) -> Vec<Tensor<f64>> {
    (0..n).map(|_| Tensor::from_fn(&shape, |_| rng.random_range(0.0..1.0))).collect()
}

fn random_video(rng: &mut impl Rng, w: usize, h: usize, t: usize) -> Vec<Frame> {
    (0..t)
        .map(|_| Frame::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]))
        .collect()
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    for (mode, seed) in [(Mode::Eval, 1u64), (Mode::Train, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = tiny_config();
        cfg.dropout_fc1 = 0.3;
        let model = LrcnModel::<f64>::build(cfg, &mut rng).unwrap();
        let frames = random_frames(&mut rng, 3, [1, 8, 8]);
        let mut target = LrcnGradTarget { model, frames, label: 1, mode, seed: 77 };
        let report = grad_check(&mut target, &GradCheckConfig::with_tolerance(1e-3));
        assert!(report.passed(), "{mode:?}: max rel error {}", report.max_rel_error);
    }
}

#[test]
fn forward_matches_unrolled_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let model = LrcnModel::<f64>::build(LrcnConfig::mini(), &mut rng).unwrap();
        let frames = random_frames(&mut rng, 3, [3, 32, 32]);
        let got = model.forward_video_eval(&frames).unwrap();
        let want = common::manual_forward(&model, &frames);
        for k in 0..2 {
            assert!((got.probs[k] - want[k]).abs() < 1e-12, "{:?} vs {want:?}", got.probs);
        }
    }
}

#[test]
fn bypass_with_identical_frames_equals_single_frame() {
    let mut cfg = LrcnConfig::mini();
    cfg.lstm_hidden = cfg.fc1_width;
    let mut model = LrcnModel::<f64>::from_config(cfg).unwrap();
    model.set_lstm_bypass(true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_frames(&mut rng, 1, [3, 32, 32]).remove(0);
    let one = model.forward_video_eval(std::slice::from_ref(&f)).unwrap();
    let many = model.forward_video_eval(&vec![f; 5]).unwrap();
    for k in 0..2 {
        assert!((one.probs[k] - many.probs[k]).abs() < 1e-12);
    }
}

#[test]
fn bypass_needs_matching_widths() {
    let mut model = LrcnModel::<f64>::from_config(LrcnConfig::mini()).unwrap();
    assert!(model.set_lstm_bypass(true).is_err());
}

#[test]
fn predict_matches_brute_force_on_twenty_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let model = LrcnModel::<f64>::build(LrcnConfig::mini(), &mut rng).unwrap();
        let frames = random_video(&mut rng, 40, 40, 3);
        let got = predict(&model, &frames).unwrap();
        let want = common::brute_force_predict(&model, &frames);
        assert!((got.probs[0] - want[0]).abs() < 1e-9 && (got.probs[1] - want[1]).abs() < 1e-9);
    }
}

#[test]
fn predict_on_crop_sized_source_uses_plain_and_mirrored() {
    let mut cfg = LrcnConfig::mini();
    cfg.source_frame_size = cfg.input_crop;
    let model = LrcnModel::<f64>::from_config(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frames = random_video(&mut rng, 32, 32, 2);
    let t = |fs: &[Frame]| model.input_tensors(fs);
    let mirrored: Vec<Frame> = frames.iter().map(Frame::mirror).collect();
    let a = model.forward_video_eval(&t(&frames)).unwrap();
    let b = model.forward_video_eval(&t(&mirrored)).unwrap();
    let p = predict(&model, &frames).unwrap();
    for k in 0..2 {
        assert!((p.probs[k] - (a.probs[k] + b.probs[k]) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn constant_model_predicts_even_odds() {
    let mut model = LrcnModel::<f64>::from_config(LrcnConfig::mini()).unwrap();
    model.fc2.weight.fill(0.0);
    model.fc2.bias.fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = predict(&model, &random_video(&mut rng, 40, 40, 2)).unwrap();
    assert_eq!(p.probs, [0.5, 0.5]);
    assert_eq!(p.label, 1);
}

fn symmetrise(t: &mut Tensor<f64>) {
    let shape = t.shape().to_vec();
    let kw = shape[3];
    let d = t.data_mut();
    for row in d.chunks_mut(kw) {
        for x in 0..kw / 2 {
            let avg = (row[x] + row[kw - 1 - x]) / 2.0;
            row[x] = avg;
            row[kw - 1 - x] = avg;
        }
    }
}

#[test]
fn mirror_symmetric_model_is_mirror_invariant() {
    let mut model = LrcnModel::<f64>::from_config(LrcnConfig::mini()).unwrap();
    for c in &mut model.conv {
        symmetrise(&mut c.weight);
    }
    // fc1 reads a [8, 4, 4] map: make its weights symmetric in the width axis
    let w = model.fc1.weight.data_mut();
    for row in w.chunks_mut(4) {
        let (a, b) = ((row[0] + row[3]) / 2.0, (row[1] + row[2]) / 2.0);
        row.copy_from_slice(&[a, b, b, a]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let frames = random_video(&mut rng, 40, 40, 3);
    let mirrored: Vec<Frame> = frames.iter().map(Frame::mirror).collect();
    let a = predict(&model, &frames).unwrap();
    let b = predict(&model, &mirrored).unwrap();
    for k in 0..2 {
        assert!((a.probs[k] - b.probs[k]).abs() < 1e-9);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut cfg = LrcnConfig::mini();
    cfg.lr = 0.0;
    cfg.epochs = 1;
    cfg.iterations_per_epoch = 3;
    cfg.batch_size = 2;
    let mut model = LrcnModel::<f32>::from_config(cfg).unwrap();
    let before = model.params_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<LabeledFrames> = (0..4)
        .map(|i| LabeledFrames { frames: random_video(&mut rng, 40, 40, 2), label: (i % 2) as u8 })
        .collect();
    let curve = train(&mut model, &samples).unwrap();
    assert_eq!(curve.losses.len(), 3);
    assert_eq!(model.params_flat(), before);
}

#[test]
fn augmentation_statistics() {
    let src = Frame::filled(320, 240, [0, 0, 0]);
    let crop = FrameShape::new(227, 227, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let plans: Vec<CropPlan> = (0..10_000).map(|_| CropPlan::random(&src, crop, &mut rng).unwrap()).collect();
    let mirrors = plans.iter().filter(|p| p.mirror).count() as f64 / 1e4;
    assert!((0.48..=0.52).contains(&mirrors), "{mirrors}");
    assert!(plans.iter().any(|p| p.top == 0) && plans.iter().any(|p| p.top == 13));
    assert!(plans.iter().any(|p| p.left == 0) && plans.iter().any(|p| p.left == 93));
    assert!(plans.iter().all(|p| p.top <= 13 && p.left <= 93));
    let mut again = ChaCha8Rng::seed_from_u64(11);
    let replay: Vec<CropPlan> = (0..100).map(|_| CropPlan::random(&src, crop, &mut again).unwrap()).collect();
    assert_eq!(&plans[..100], &replay[..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn output_is_on_the_simplex(seed in any::<u64>(), t in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = LrcnModel::<f64>::build(tiny_config(), &mut rng).unwrap();
        let frames = random_frames(&mut rng, t, [1, 8, 8]);
        let p = model.forward_video_eval(&frames).unwrap();
        prop_assert!(p.probs.iter().all(|&v| v >= 0.0));
        prop_assert!((p.probs[0] + p.probs[1] - 1.0).abs() < 1e-9);
        prop_assert_eq!(p.label, u8::from(p.probs[1] >= p.probs[0]));
    }

    #[test]
    fn tta_is_pure(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = random_video(&mut rng, 10, 9, 2);
        let crop = FrameShape::new(6, 7, 3);
        let a = tta_crops(&frames, crop).unwrap();
        prop_assert_eq!(a.len(), 10);
        prop_assert_eq!(a, tta_crops(&frames, crop).unwrap());
    }
}

#[test]
fn predict_is_repeatable() {
    let model = LrcnModel::<f32>::from_config(LrcnConfig::mini()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let frames = random_video(&mut rng, 40, 40, 4);
    assert_eq!(predict(&model, &frames).unwrap(), predict(&model, &frames).unwrap());
}
