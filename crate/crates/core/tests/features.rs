use popcast::features::{
    cell_histograms, early_fusion, gist, hog, video_features, Descriptor, DescriptorSet, GistConfig, GistExtractor,
    HogConfig,
};
use popcast::frame::Frame;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 128;

/// Smooth blob supported in the middle of the frame; borders stay flat.
fn centred_pattern(seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| (rng.random_range(40.0..88.0), rng.random_range(40.0..88.0), rng.random_range(4.0..12.0), rng.random_range(-1.0..1.0)))
        .collect();
    Frame::from_fn(N, N, |x, y| {
        let v: f64 = blobs
            .iter()
            .map(|&(cx, cy, s, a)| a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        let g = (128.0 + 100.0 * v.clamp(-1.2, 1.2)).round() as u8;
        [g, g, g]
    })
}

fn rotate90(f: &Frame) -> Frame {
    let n = f.width();
    Frame::from_fn(n, n, |x, y| f.pixel(n - 1 - y, x))
}

#[test]
fn hog_rotation_permutes_orientation_bins() {
    let cfg = HogConfig { bins: 8, ..HogConfig::default() };
    let cells = N / cfg.cell;
    for seed in 0..3 {
        let f = centred_pattern(seed);
        let a = cell_histograms(&f, &cfg).unwrap();
        let b = cell_histograms(&rotate90(&f), &cfg).unwrap();
        for cy in 0..cells {
            for cx in 0..cells {
                let (oy, ox) = (cx, cells - 1 - cy);
                for bin in 0..8 {
                    let new = b[(cy * cells + cx) * 8 + (bin + 4) % 8];
                    let old = a[(oy * cells + ox) * 8 + bin];
                    assert!((new - old).abs() < 1e-9, "cell ({cy},{cx}) bin {bin}: {new} vs {old}");
                }
            }
        }
    }
}

/// Band-limited test image: a few low-frequency periodic waves.
fn waves(seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<(f64, f64, f64, [f64; 3])> = (0..5)
        .map(|_| {
            let amp = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            (rng.random_range(-12i32..=12) as f64, rng.random_range(-12i32..=12) as f64, rng.random_range(0.0..6.28), amp)
        })
        .collect();
    Frame::from_fn(N, N, |x, y| {
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let v: f64 = comps
                .iter()
                .map(|&(u, v, ph, amp)| amp[c] * (std::f64::consts::TAU * (u * x as f64 + v * y as f64) / N as f64 + ph).cos())
                .sum();
            *out = (128.0 + 25.0 * v).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
}

#[test]
fn gist_mirror_maps_orientations_and_grid() {
    let cfg = GistConfig::default();
    let ex = GistExtractor::new(cfg.clone()).unwrap();
    let specs = cfg.filter_specs();
    let g = cfg.grid;
    for seed in 0..3 {
        let f = waves(seed);
        let a = ex.extract(&f).unwrap();
        let b = ex.extract(&f.mirror()).unwrap();
        let per_channel = specs.len() * g * g;
        for c in 0..3 {
            for (fi, &(s, k, _, _)) in specs.iter().enumerate() {
                let n = cfg.orientations_per_scale[s];
                let mk = (n - k) % n;
                let fj = specs.iter().position(|&(s2, k2, _, _)| s2 == s && k2 == mk).unwrap();
                for gy in 0..g {
                    for gx in 0..g {
                        let x = a[c * per_channel + fi * g * g + gy * g + gx];
                        let y = b[c * per_channel + fj * g * g + gy * g + (g - 1 - gx)];
                        assert!((x - y).abs() < 1e-6, "c{c} s{s} k{k} ({gy},{gx}): {x} vs {y}");
                    }
                }
            }
        }
    }
}

#[test]
fn grating_excites_the_matching_filter() {
    let cfg = GistConfig { color: false, ..GistConfig::default() };
    let ex = GistExtractor::new(cfg.clone()).unwrap();
    let specs = cfg.filter_specs();
    let g2 = cfg.grid * cfg.grid;
    for (target, &(_, _, f0, theta)) in specs.iter().enumerate() {
        // nearest whole-cycle frequency on the 128-pixel grid along the filter direction
        let (u, v) = ((f0 * theta.cos() * N as f64).round(), (f0 * theta.sin() * N as f64).round());
        let img = Frame::from_fn(N, N, |x, y| {
            let p = std::f64::consts::TAU * (u * x as f64 + v * y as f64) / N as f64;
            let g = (128.0 + 100.0 * p.cos()).round() as u8;
            [g, g, g]
        });
        let out = ex.extract(&img).unwrap();
        let energy: Vec<f64> = (0..specs.len()).map(|i| out[i * g2..(i + 1) * g2].iter().sum()).collect();
        let best = (0..specs.len()).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert_eq!(best, target, "grating ({u},{v}) energies {energy:?}");
    }
}

#[test]
fn descriptor_lengths_match_defaults() {
    let f = waves(9);
    assert_eq!(hog(&f, &HogConfig::default()).unwrap().len(), 8100);
    assert_eq!(gist(&f, &GistConfig::default()).unwrap().len(), 960);
    assert_eq!(DescriptorSet::hog_gist().frame_features(&f).unwrap().len(), 9060);
}

#[test]
fn descriptors_are_deterministic() {
    let set = DescriptorSet::hog_gist();
    let f = waves(4);
    let a = set.frame_features(&f).unwrap();
    let b = set.frame_features(&f).unwrap();
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
}

fn small_set() -> DescriptorSet {
    DescriptorSet::new(vec![
        Descriptor::Hog(HogConfig { resize_to: (32, 32), ..HogConfig::default() }),
        Descriptor::Gist(GistConfig { resize_to: (32, 32), ..GistConfig::default() }),
    ])
    .unwrap()
}

fn noise_frame(rng: &mut impl Rng) -> Frame {
    Frame::from_fn(20, 16, |_, _| [rng.random(), rng.random(), rng.random()])
}

#[test]
fn video_features_average_frames() {
    let set = small_set();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frames: Vec<Frame> = (0..3).map(|_| noise_frame(&mut rng)).collect();
    let single = set.frame_features(&frames[0]).unwrap();
    assert_eq!(video_features(&frames[..1], &set).unwrap(), single);
    let same = video_features(&vec![frames[0].clone(); 4], &set).unwrap();
    assert!(same.values.iter().zip(&single.values).all(|(a, b)| (a - b).abs() < 1e-12));
    let per: Vec<_> = frames.iter().map(|f| set.frame_features(f).unwrap()).collect();
    let mean: Vec<f64> = (0..single.len()).map(|i| per.iter().map(|p| p.values[i]).sum::<f64>() / 3.0).collect();
    let v = video_features(&frames, &set).unwrap();
    assert!(v.values.iter().zip(&mean).all(|(a, b)| (a - b).abs() < 1e-12));
    assert_eq!(v.descriptor_id, set.id());
    assert!(video_features(&[], &set).is_err());
}

#[test]
fn fused_id_lists_parts_in_order() {
    let set = small_set();
    let parts = set.frame_parts(&Frame::filled(8, 8, [1, 2, 3])).unwrap();
    let fused = early_fusion(&parts).unwrap();
    assert_eq!(fused.descriptor_id, format!("{}+{}", parts[0].descriptor_id, parts[1].descriptor_id));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hog_blocks_have_unit_norm_at_most(seed in any::<u64>(), cell in 2usize..6, block in 1usize..3, bins in 2usize..10) {
        let cfg = HogConfig { resize_to: (24, 20), cell, block, bins, ..HogConfig::default() };
        prop_assume!(cfg.validate().is_ok());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = hog(&noise_frame(&mut rng), &cfg).unwrap();
        prop_assert_eq!(v.len(), cfg.dim());
        for b in v.chunks(block * block * bins) {
            prop_assert!(b.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn gist_length_matches_config(seed in any::<u64>(), grid in 1usize..5, orients in proptest::collection::vec(1usize..4, 1..4), color in any::<bool>()) {
        let cfg = GistConfig { resize_to: (16, 16), grid, scales: orients.len(), orientations_per_scale: orients, color };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = gist(&noise_frame(&mut rng), &cfg).unwrap();
        prop_assert_eq!(v.len(), cfg.dim());
        prop_assert!(v.iter().all(|x| x.is_finite()));
    }
}
