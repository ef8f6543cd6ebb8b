mod common;

use std::fs;
use std::path::Path;

use specdetect::backend::{open_backend, BackendDescriptor, BackendHandle};
use specdetect::detector::ScoreOptions;
use specdetect::eval::corrupt::gaussian_blur;
use specdetect::eval::report::write_roc_csvs;
use specdetect::eval::{
    auc, bench_runtime, evaluate, robustness_grid, sweep, CorruptionKind, CorruptionSpec,
    EvalOptions, SweepAxis,
};
use specdetect::fixture::{fake_image, real_image, save_png16, FixtureSpec};
use specdetect::manifest::{load_manifest, DatasetManifest, Label, ManifestEntry};
use specdetect::{Error, PerturbConfig, PreprocessSpec, ResizeFilter};
use tempfile::tempdir;

const SIZE: usize = 56;

fn options() -> EvalOptions {
    EvalOptions {
        score: ScoreOptions {
            preprocess: PreprocessSpec {
                target_size: SIZE,
                filter: ResizeFilter::Bilinear,
            },
            ..Default::default()
        },
        record_runtime: false,
    }
}

fn spectral() -> BackendHandle {
    open_backend(&BackendDescriptor::spectral(SIZE)).unwrap()
}

/// Reals plus two generators: the fixture's low-pass fakes and blurred reals.
fn two_generator_manifest(dir: &Path, n: usize) -> DatasetManifest {
    let spec = FixtureSpec {
        size: SIZE,
        ..Default::default()
    };
    let mut entries = Vec::new();
    for i in 0..n {
        let real = real_image(&spec, i as u64);
        let items = [
            ("real", Label::Real, real.clone()),
            ("lowpass", Label::Fake, fake_image(&spec, &real)),
            ("blur", Label::Fake, gaussian_blur(&real, 1.5)),
        ];
        for (tag, label, img) in items {
            let rel = format!("{tag}_{i}.png");
            save_png16(&img, &dir.join(&rel)).unwrap();
            let generator = if label == Label::Real { "" } else { tag };
            entries.push(ManifestEntry {
                path: rel.into(),
                label,
                generator: generator.into(),
            });
        }
    }
    let m = DatasetManifest::new(entries);
    m.write(dir.join("manifest.jsonl")).unwrap();
    load_manifest(dir.join("manifest.jsonl")).unwrap()
}

#[test]
fn per_generator_auc_against_shared_real_pool() {
    let dir = tempdir().unwrap();
    let manifest = two_generator_manifest(dir.path(), 6);
    let report = evaluate(
        &manifest,
        &PerturbConfig::default(),
        &spectral(),
        &options(),
    )
    .unwrap();
    assert_eq!(report.per_generator_auc.len(), 2);
    assert_eq!(report.counts.real, 6);
    assert_eq!(report.counts.fake["blur"], 6);
    let mean = (report.per_generator_auc["blur"] + report.per_generator_auc["lowpass"]) / 2.0;
    assert_eq!(report.average_auc, mean);
    assert!(report.per_generator_auc.values().all(|&a| a > 0.9));
    for (g, roc) in &report.roc {
        assert_eq!(roc.trapezoid_area(), report.per_generator_auc[g]);
    }
    assert!(report.runtime_seconds.is_none());

    let roc_dir = dir.path().join("roc");
    write_roc_csvs(&roc_dir, &report).unwrap();
    let csv = fs::read_to_string(roc_dir.join("blur.csv")).unwrap();
    assert!(csv.starts_with("fpr,tpr\n0,0\n"));
    assert!(csv.ends_with("1,1\n"));
}

#[test]
fn generator_with_no_scored_fakes_is_reported_missing() {
    let dir = tempdir().unwrap();
    let manifest = two_generator_manifest(dir.path(), 3);
    for e in manifest.entries().iter().filter(|e| e.generator == "blur") {
        fs::write(manifest.resolve(e), b"truncated").unwrap();
    }
    let report = evaluate(
        &manifest,
        &PerturbConfig::default(),
        &spectral(),
        &options(),
    )
    .unwrap();
    assert_eq!(report.missing_generators, vec!["blur".to_string()]);
    assert_eq!(report.counts.skipped, 3);
    assert_eq!(report.average_auc, report.per_generator_auc["lowpass"]);
}

#[test]
fn single_class_manifests_are_rejected() {
    let dir = tempdir().unwrap();
    let manifest = two_generator_manifest(dir.path(), 2);
    for label in [Label::Real, Label::Fake] {
        let only = DatasetManifest::new(
            manifest
                .entries()
                .iter()
                .filter(|e| e.label == label)
                .cloned()
                .collect(),
        )
        .with_base_dir(dir.path());
        let err = evaluate(&only, &PerturbConfig::default(), &spectral(), &options()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(_)));
    }
}

#[test]
fn zero_lambda_sweep_is_chance() {
    let dir = tempdir().unwrap();
    let manifest = load_manifest(common::small_fixture(dir.path(), 4, SIZE)).unwrap();
    let rows = sweep(
        &manifest,
        &PerturbConfig::default(),
        &spectral(),
        &options(),
        SweepAxis::Lambda,
        &[0.0, 0.01],
    )
    .unwrap();
    assert_eq!(rows[0].average_auc, 0.5);
    assert!(rows[1].average_auc > 0.9);
    assert_eq!(rows[1].report.perturb.lambda, 0.01);
}

#[test]
fn sweep_validates_every_value_first() {
    let dir = tempdir().unwrap();
    let manifest = load_manifest(common::small_fixture(dir.path(), 2, SIZE)).unwrap();
    let run = |axis, values: &[f64]| {
        sweep(
            &manifest,
            &PerturbConfig::default(),
            &spectral(),
            &options(),
            axis,
            values,
        )
    };
    assert!(matches!(
        run(SweepAxis::PatchSize, &[14.0, 16.0]),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        run(SweepAxis::Layer, &[13.0]),
        Err(Error::Unsupported(_))
    ));
    assert!(run(SweepAxis::Lambda, &[0.01, -1.0]).is_err());
    let rows = run(SweepAxis::PatchSize, &[7.0, 28.0]).unwrap();
    assert_eq!(rows[1].report.perturb.patch_size, 28);
}

#[test]
fn layer_sweep_on_vit_bundle() {
    let dir = tempdir().unwrap();
    let manifest = load_manifest(common::small_fixture(dir.path(), 2, 28)).unwrap();
    let bundle = common::data_dir().join("tiny_vit");
    let handle = open_backend(&BackendDescriptor::vit(&bundle, 1, 28)).unwrap();
    let mut opts = options();
    opts.score.preprocess.target_size = 28;
    let rows = sweep(
        &manifest,
        &PerturbConfig::default(),
        &handle,
        &opts,
        SweepAxis::Layer,
        &[1.0, 3.0],
    )
    .unwrap();
    assert_eq!(rows[1].report.backend.layer, 3);
    let err = sweep(
        &manifest,
        &PerturbConfig::default(),
        &handle,
        &opts,
        SweepAxis::Layer,
        &[4.0],
    );
    assert!(matches!(err, Err(Error::LayerOutOfRange { .. })));
}

#[test]
fn blur_degrades_separation() {
    let dir = tempdir().unwrap();
    let manifest = load_manifest(common::small_fixture(dir.path(), 8, SIZE)).unwrap();
    let specs: Vec<CorruptionSpec> = (1..=3)
        .map(|l| CorruptionSpec::standard(CorruptionKind::GaussianBlur, l).unwrap())
        .collect();
    let rows = robustness_grid(
        &manifest,
        &PerturbConfig::default(),
        &spectral(),
        &options(),
        &specs,
    )
    .unwrap();
    let clean = evaluate(
        &manifest,
        &PerturbConfig::default(),
        &spectral(),
        &options(),
    )
    .unwrap();
    assert_eq!(rows.len(), 3);
    for (spec, report) in &rows {
        assert_eq!(report.corruption.as_ref(), Some(spec));
    }
    assert!(rows[2].1.average_auc < clean.average_auc);
}

#[test]
fn bench_counts_images_and_phases() {
    let dir = tempdir().unwrap();
    let manifest = load_manifest(common::small_fixture(dir.path(), 4, SIZE)).unwrap();
    let opts = options().score;
    let report = bench_runtime(&manifest, &PerturbConfig::default(), &spectral(), &opts).unwrap();
    assert!(!report.empty);
    assert_eq!(report.images, 8);
    assert_eq!(report.batch_size, 8);
    assert!(report.total_seconds > 0.0);
    assert!((0.0..=1.0).contains(&report.perturb_share()));
    let per = report.total_seconds / 8.0;
    assert!((report.per_image_seconds - per).abs() < 1e-12);
}

#[test]
fn bench_on_undecodable_manifest_is_empty() {
    let dir = tempdir().unwrap();
    let manifest = load_manifest(common::small_fixture(dir.path(), 1, SIZE)).unwrap();
    for e in manifest.entries() {
        fs::write(manifest.resolve(e), b"x").unwrap();
    }
    let report = bench_runtime(
        &manifest,
        &PerturbConfig::default(),
        &spectral(),
        &ScoreOptions::default(),
    )
    .unwrap();
    assert!(report.empty);
    assert_eq!(report.total_seconds, 0.0);
}

#[test]
fn auc_of_identical_pools_is_half() {
    let s = [0.3, 0.9, 0.9, 0.1];
    assert_eq!(auc(&s, &s).unwrap(), 0.5);
}
