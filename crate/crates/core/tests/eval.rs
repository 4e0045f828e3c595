mod common;

use popcast::eval::{
    accuracy, run_experiment, spearman, Aggregate, ExperimentData, ExperimentSample, ModelSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn label_only_data(n: usize, seed: u64) -> ExperimentData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let score: f64 = rng.random_range(-5.0..5.0);
            ExperimentSample {
                id: format!("v{i:05}"),
                label: u8::from(score > 0.0),
                score,
                frames: Vec::new(),
                features: None,
            }
        })
        .collect();
    ExperimentData {
        samples,
        feature_id: "none".into(),
    }
}

#[test]
fn oracle_model_is_perfect() {
    let data = label_only_data(200, 3);
    let rep = run_experiment(&data, &[ModelSpec::Oracle], 5, 11).unwrap();
    let m = rep.model("oracle").unwrap();
    assert_eq!(m.accuracy.unwrap(), Aggregate { mean: 1.0, std: 0.0 });
    let ids: Vec<String> = data.samples.iter().map(|s| s.id.clone()).collect();
    let split = popcast::dataset::kfold_split(&ids, 5, 11).unwrap();
    for f in &m.folds {
        let idx = split.test_indices(f.fold);
        let labels: Vec<f64> = idx.iter().map(|&i| data.samples[i].label as f64).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| data.samples[i].score).collect();
        assert_eq!(f.spearman, common::spearman_naive(&labels, &scores));
    }
    assert_eq!(rep.split_fingerprint, split.fingerprint());
}

#[test]
fn coinflip_stays_in_binomial_band() {
    let data = label_only_data(2000, 5);
    let rep = run_experiment(&data, &[ModelSpec::CoinFlip], 5, 1).unwrap();
    for f in &rep.model("coinflip").unwrap().folds {
        assert!((0.44..=0.56).contains(&f.accuracy), "fold {}: {}", f.fold, f.accuracy);
    }
}

#[test]
fn same_seed_same_report() {
    let data = label_only_data(120, 9);
    let models = [ModelSpec::Oracle, ModelSpec::CoinFlip];
    let a = run_experiment(&data, &models, 5, 42).unwrap();
    let b = run_experiment(&data, &models, 5, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
    assert_ne!(a.split_fingerprint, run_experiment(&data, &models, 5, 43).unwrap().split_fingerprint);
}

#[test]
fn failing_model_does_not_stop_others() {
    let data = label_only_data(60, 1);
    let rep = run_experiment(&data, &[ModelSpec::logreg_default(), ModelSpec::Oracle], 5, 0).unwrap();
    let lr = rep.model("logreg").unwrap();
    assert!(lr.error.as_deref().unwrap().contains("no feature vector"));
    assert!(lr.accuracy.is_none());
    assert_eq!(rep.model("oracle").unwrap().accuracy.unwrap().mean, 1.0);
    assert!(rep.to_csv().contains("logreg,failed,,"));
    assert!(rep.to_table().contains("failed"));
}

#[test]
fn shallow_models_share_the_split() {
    let mut data = label_only_data(80, 2);
    for s in &mut data.samples {
        s.features = Some(vec![s.score, 1.0 - s.score * 0.5]);
    }
    data.feature_id = "toy".into();
    let rep = run_experiment(&data, &[ModelSpec::logreg_default(), ModelSpec::svm_default()], 5, 3).unwrap();
    for m in &rep.models {
        assert!(m.error.is_none(), "{:?}", m.error);
        assert_eq!(m.features, "toy");
        assert!(m.accuracy.unwrap().mean > 0.9, "{}: {:?}", m.model, m.accuracy);
        assert_eq!(m.folds.len(), 5);
    }
}

#[test]
fn report_table_and_csv_layout() {
    let data = label_only_data(50, 4);
    let rep = run_experiment(&data, &[ModelSpec::Oracle], 5, 0).unwrap();
    let table = rep.to_table();
    let header: Vec<&str> = table.lines().next().unwrap().split('|').map(str::trim).collect();
    assert_eq!(header, ["model", "features", "accuracy", "spearman"]);
    assert!(table.contains("1.000 ± 0.000"));
    let csv = rep.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,fold,accuracy,spearman");
    assert_eq!(lines.len(), 1 + 5 + 2);
    assert!(lines[6].starts_with("oracle,mean,1,"));
    let dir = tempfile::tempdir().unwrap();
    rep.write(dir.path()).unwrap();
    let back: popcast::eval::ExperimentReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, rep);
}

fn one_pass(v: &[f64]) -> (f64, f64) {
    // Welford
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &x in v {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    (mean, if n > 1.0 { (m2 / (n - 1.0)).sqrt() } else { 0.0 })
}

proptest! {
    #[test]
    fn aggregate_matches_welford(v in proptest::collection::vec(0.0f64..1.0, 1..12)) {
        let a = Aggregate::of(&v);
        let (m, s) = one_pass(&v);
        prop_assert!((a.mean - m).abs() < 1e-12);
        prop_assert!((a.std - s).abs() < 1e-12);
    }

    #[test]
    fn spearman_invariant_under_increasing_maps(
        pairs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..30),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = spearman(&a, &b).unwrap();
        let ea: Vec<f64> = a.iter().map(|x| x.exp()).collect();
        let fb: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
        let moved = spearman(&ea, &fb).unwrap();
        prop_assert!((base.rho - moved.rho).abs() < 1e-12);
        prop_assert_eq!(base.degenerate, moved.degenerate);
    }

    #[test]
    fn spearman_self_is_one(v in proptest::collection::vec(-10.0f64..10.0, 2..30)) {
        prop_assume!(v.iter().any(|&x| x != v[0]));
        prop_assert!((spearman(&v, &v).unwrap().rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_invariant_under_relabeling(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..50)) {
        let (p, t): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let fp: Vec<u8> = p.iter().map(|x| 1 - x).collect();
        let ft: Vec<u8> = t.iter().map(|x| 1 - x).collect();
        prop_assert_eq!(accuracy(&p, &t).unwrap(), accuracy(&fp, &ft).unwrap());
    }
}
