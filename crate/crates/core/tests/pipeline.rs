mod common;

use common::arch;
use rl2_core::degrade::{salt_pepper, DegradeKind, NoiseSchedule};
use rl2_core::features::{crop_patches, BuiltinExtractor};
use rl2_core::harness::{filter_experiment, monotonicity_sweep, stability_curve};
use rl2_core::synth::{corpus, SynthConfig};
use rl2_core::train::train;
use rl2_core::{FeatureSet, FlowModel, Image, TrainConfig};

fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 32,
        learning_rate: 1e-3,
        arch: arch(2, &[16]),
        ..TrainConfig::default()
    }
}

fn trained(images: &[Image], extractor: &BuiltinExtractor) -> (FeatureSet, FlowModel) {
    let set = extractor.extract_features(images, "clean").unwrap();
    let (model, _) = train(&set, &quick_config()).unwrap();
    (set, model)
}

#[test]
fn salt_pepper_textures_separate_from_clean_ones() {
    let ex = BuiltinExtractor::default();
    let clean = corpus(&SynthConfig::default(), 3, 20);
    let noisy: Vec<Image> = clean
        .iter()
        .enumerate()
        .map(|(i, im)| salt_pepper(im, 0.3, 100 + i as u64).unwrap())
        .collect();
    let a = ex.extract_features(&clean, "clean").unwrap();
    let b = ex.extract_features(&noisy, "noisy").unwrap();
    let mean_pairs = |x: &FeatureSet, y: &FeatureSet, same: bool| {
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..x.len() {
            for j in 0..y.len() {
                if same && j <= i {
                    continue;
                }
                total += distance(x.row(i), y.row(j));
                count += 1;
            }
        }
        total / count as f64
    };
    let within = (mean_pairs(&a, &a, true) + mean_pairs(&b, &b, true)) / 2.0;
    let between = mean_pairs(&a, &b, false);
    assert!(within < between, "within {within}, between {between}");
}

#[test]
fn features_are_finite_for_extreme_images() {
    let ex = BuiltinExtractor::default();
    for fill in [0u8, 1, 128, 254, 255] {
        assert!(ex
            .extract(&Image::filled(33, 47, 3, fill))
            .unwrap()
            .iter()
            .all(|v| v.is_finite()));
    }
}

#[test]
fn patches_of_a_large_texture_are_extractable() {
    let config = SynthConfig {
        size: 128,
        ..SynthConfig::default()
    };
    let image = &corpus(&config, 1, 1)[0];
    let patches = crop_patches(image, 64, 64).unwrap();
    assert_eq!(patches.len(), 4);
    let set = BuiltinExtractor::default()
        .extract_features(&patches, "patches")
        .unwrap();
    assert_eq!((set.len(), set.dim()), (4, 512));
}

#[test]
fn sweep_contract_edges() {
    let ex = BuiltinExtractor::default();
    let images = corpus(&SynthConfig::default(), 4, 160);
    let (_, model) = trained(&images[..120], &ex);
    let clean = &images[120..];
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();

    let single = monotonicity_sweep(
        clean,
        DegradeKind::SaltPepper,
        &[0.0],
        &model,
        &ex,
        &schedule,
        1,
    )
    .unwrap();
    assert_eq!(single.rl2_values.len(), 1);
    assert!(single.monotone);
    assert!(single.rl2_values[0] > 0.0, "disjoint halves differ");

    let sweep = |sev: &[f64], m: &FlowModel| {
        monotonicity_sweep(clean, DegradeKind::SaltPepper, sev, m, &ex, &schedule, 1)
    };
    assert!(sweep(&[0.0, 0.2, 0.2], &model).is_err());
    assert!(sweep(&[0.0, 0.3, 0.1], &model).is_err());
    assert!(sweep(&[0.1, 0.2], &model).is_err());
    assert!(sweep(&[0.0, 1.5], &model).is_err());
    let untrained = FlowModel::new(512, &arch(2, &[16]), 1).unwrap();
    assert!(sweep(&[0.0, 0.1], &untrained).is_err());
    let narrow = FlowModel::new(8, &arch(2, &[4]), 1).unwrap();
    assert!(sweep(&[0.0, 0.1], &narrow).is_err());

    let ladder = sweep(&[0.0, 0.1, 0.2, 0.4], &model).unwrap();
    assert_eq!(ladder.spearman, 1.0, "{:?}", ladder.rl2_values);
    assert!(ladder.monotone);
}

#[test]
fn stability_without_sampling_variation_has_zero_spread() {
    let ex = BuiltinExtractor::default();
    let images = corpus(&SynthConfig::default(), 5, 120);
    let (set, model) = trained(&images, &ex);
    let curve = stability_curve(&set, &set, &[set.len()], 3, &model, 9).unwrap();
    assert_eq!(curve.std_rl2, vec![0.0]);
    assert_eq!(curve.mean_rl2, vec![0.0]);
    assert!(stability_curve(&set, &set, &[set.len() + 1], 3, &model, 9).is_err());
    assert!(stability_curve(&set, &set, &[10], 1, &model, 9).is_err());
    let again = stability_curve(&set, &set, &[10, 40], 4, &model, 9).unwrap();
    assert_eq!(
        again,
        stability_curve(&set, &set, &[10, 40], 4, &model, 9).unwrap()
    );
}

#[test]
fn indistinguishable_test_sets_give_chance_auc() {
    let ex = BuiltinExtractor::default();
    let images = corpus(&SynthConfig::default(), 6, 180);
    let train_set = ex.extract_features(&images[..140], "train").unwrap();
    let test_set = ex.extract_features(&images[140..], "test").unwrap();
    let (_, roc) = filter_experiment(&train_set, &test_set, &test_set, &quick_config()).unwrap();
    assert!((roc.auc - 0.5).abs() <= 0.05, "auc {}", roc.auc);
    assert!(roc.warnings.is_empty(), "{:?}", roc.warnings);

    let overlap = ex.extract_features(&images[130..150], "overlap").unwrap();
    let (_, roc) = filter_experiment(&train_set, &overlap, &test_set, &quick_config()).unwrap();
    assert_eq!(roc.warnings.len(), 1, "{:?}", roc.warnings);
    assert!(
        roc.warnings[0].starts_with("10 of 20"),
        "{:?}",
        roc.warnings
    );
}
