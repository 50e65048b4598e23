use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eeg4d_core::model::{Model, ModelConfig};
use eeg4d_core::repr4d::{Sample4D, SEED_CHANNELS};
use eeg4d_core::sigproc::RawRecording;

const SMALL: &[&str] = &[
    "--set",
    "conv_channels=2,2,2,2",
    "--set",
    "conv_kernels=3,3,3,3",
    "--set",
    "fc_units=4",
    "--set",
    "lstm_units=2",
    "--set",
    "temporal_hidden=2",
    "--set",
    "spatial_kernel=3",
];

fn eeg4d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eeg4d")).args(args).output().expect("spawn eeg4d")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sample_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "e4da"))
        .collect();
    v.sort();
    v
}

fn synth(dir: &Path, per_class: &str, seed: &str) {
    let out = eeg4d(&["synth", "--out", s(dir), "--per-class", per_class, "--seed", seed]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_balanced_reproducible_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "40", "3");
    synth(&b, "40", "3");
    let files = sample_files(&a);
    assert_eq!(files.len(), 120);
    let mut counts = [0; 3];
    for f in &files {
        counts[Sample4D::read(f).unwrap().label as usize] += 1;
        let other = b.join(f.file_name().unwrap());
        assert_eq!(fs::read(f).unwrap(), fs::read(other).unwrap());
    }
    assert_eq!(counts, [40, 40, 40]);
    let cfg = fs::read_to_string(a.join("resolved.cfg")).unwrap();
    assert!(cfg.contains("seed=3\n") && cfg.contains("per_class=40\n"), "{cfg}");
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "seed=5\nper_class=2\namplitude=3\n").unwrap();
    let out = tmp.path().join("o");
    let r = eeg4d(&["synth", "--config", s(&cfg), "--seed", "8", "--out", s(&out)]);
    assert_eq!(code(&r), 0);
    let resolved = fs::read_to_string(out.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("seed=8\n") && resolved.contains("amplitude=3\n"), "{resolved}");
    assert_eq!(sample_files(&out).len(), 6);

    // the snapshot is itself a valid config
    let again = tmp.path().join("p");
    let r = eeg4d(&["synth", "--config", s(&out.join("resolved.cfg")), "--out", s(&again)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in sample_files(&out) {
        assert_eq!(fs::read(&f).unwrap(), fs::read(again.join(f.file_name().unwrap())).unwrap());
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&eeg4d(&["synth", "--bogus"])), 1);
    assert_eq!(code(&eeg4d(&["frobnicate"])), 1);
    assert_eq!(code(&eeg4d(&["synth"])), 1, "missing --out");
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "colour=blue\n").unwrap();
    assert_eq!(code(&eeg4d(&["synth", "--config", s(&cfg), "--out", s(tmp.path())])), 1);
    assert_eq!(code(&eeg4d(&["synth", "--features", "eeg", "--out", s(tmp.path())])), 1);
    assert_eq!(code(&eeg4d(&["--help"])), 0);
}

fn recording(seconds: usize, subject: u32) -> RawRecording {
    let fs_hz = 200.0;
    let n = seconds * 200;
    let mut data = Vec::with_capacity(62 * n);
    for c in 0..62 {
        let f = 3.0 + c as f64 * 0.7;
        data.extend((0..n).map(|i| ((i as f64 / fs_hz) * f * std::f64::consts::TAU).sin() as f32));
    }
    // channels stored in reverse order; featurize maps them by name
    let names = SEED_CHANNELS.iter().rev().map(|c| c.to_string()).collect();
    RawRecording::new(names, data, fs_hz, 2, subject, 1).unwrap()
}

#[test]
fn featurize_recordings() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    recording(180, 4).write(&raw.join("rec.e4dr")).unwrap();
    let out = tmp.path().join("feat");
    let r = eeg4d(&["featurize", "--input", s(&raw), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let files = sample_files(&out);
    assert_eq!(files.len(), 60);
    let first = Sample4D::read(&files[0]).unwrap();
    assert_eq!(first.dims, [19, 19, 10, 6]);
    assert_eq!((first.label, first.subject), (2, 4));
    assert!(first.is_finite());
    assert!(out.join("resolved.cfg").exists());

    let de = tmp.path().join("de");
    assert_eq!(code(&eeg4d(&["featurize", "--input", s(&raw), "--out", s(&de), "--features", "de"])), 0);
    assert_eq!(Sample4D::read(&sample_files(&de)[0]).unwrap().dims, [19, 19, 5, 6]);
}

#[test]
fn featurize_reports_bad_files_and_empty_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    let empty = eeg4d(&["featurize", "--input", s(&raw), "--out", s(&tmp.path().join("o1"))]);
    assert_eq!(code(&empty), 0);
    assert!(String::from_utf8_lossy(&empty.stderr).contains("warning"));

    fs::write(raw.join("a_broken.e4dr"), b"E4DR garbage").unwrap();
    recording(6, 1).write(&raw.join("b_good.e4dr")).unwrap();
    let out = tmp.path().join("o2");
    let r = eeg4d(&["featurize", "--input", s(&raw), "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("a_broken.e4dr"));
    assert_eq!(sample_files(&out).len(), 2);
}

fn train(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--input", s(input), "--out", s(out), "--epochs", "1", "--batch-size", "5", "--seed", "2"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    eeg4d(&args)
}

#[test]
fn train_writes_reproducible_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "5", "1");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let r = train(&data, &a, &["--jobs", "2"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(code(&train(&data, &b, &["--jobs", "1"])), 0);
    let json = fs::read_to_string(a.join("metrics.json")).unwrap();
    assert_eq!(json, fs::read_to_string(b.join("metrics.json")).unwrap());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["folds"].as_array().unwrap().len(), 5);
    assert_eq!(fs::read_to_string(a.join("metrics.csv")).unwrap().lines().count(), 6);
    for name in ["model.ckpt", "train.log", "resolved.cfg", "curves/s1_e1_f4.csv"] {
        assert!(a.join(name).exists(), "{name}");
    }
    let model = Model::load(&a.join("model.ckpt")).unwrap();
    assert_eq!(model.config.conv_channels, vec![2; 4]);
}

#[test]
fn train_with_ablation_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "5", "1");
    let out = tmp.path().join("o");
    let r = train(&data, &out, &["--ablate", "--folds", "2", "--no-temporal-attn"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(fs::read_to_string(out.join("resolved.cfg")).unwrap().contains("temporal_attn=false"));

    let ab = tmp.path().join("ab");
    let mut args = vec!["ablate", "--input", s(&data), "--out", s(&ab), "--epochs", "1", "--folds", "2"];
    args.extend_from_slice(SMALL);
    assert_eq!(code(&eeg4d(&args)), 0);
    assert_eq!(fs::read_to_string(ab.join("ablation.csv")).unwrap().lines().count(), 6);

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(code(&train(&empty, &tmp.path().join("x"), &[])), 2);
    assert_eq!(code(&train(&data, &tmp.path().join("y"), &["--lr", "-1"])), 1);
}

fn small_model() -> ModelConfig {
    ModelConfig {
        conv_channels: vec![2; 4],
        conv_kernels: vec![3; 4],
        fc_units: 4,
        lstm_units: 2,
        temporal_hidden: 2,
        spatial_kernel: 3,
        ..ModelConfig::default()
    }
}

#[test]
fn explain_outputs_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "1", "1");
    let sample = &sample_files(&data)[0];
    let ckpt = tmp.path().join("m.ckpt");
    Model::new(small_model(), 4).unwrap().save(&ckpt).unwrap();
    let out = tmp.path().join("heat");
    let r = eeg4d(&["explain", "--checkpoint", s(&ckpt), "--sample", s(sample), "--class", "1", "--out", s(&out), "--labels"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let png = out.join("heatmap_class1.png");
    assert!(png.exists() && out.join("heatmap_class1.csv").exists());
    assert_eq!(image::open(&png).unwrap().to_rgb8().dimensions(), (456, 456));
    assert_eq!(fs::read_to_string(out.join("heatmap_class1.csv")).unwrap().lines().count(), 19);

    let bad = eeg4d(&["explain", "--checkpoint", s(&ckpt), "--sample", s(sample), "--class", "5", "--out", s(&out)]);
    assert_eq!(code(&bad), 1);
    let missing = eeg4d(&["explain", "--checkpoint", s(&out.join("none")), "--sample", s(sample), "--class", "0", "--out", s(&out)]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn zero_weight_checkpoint_gives_uniform_image() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "1", "1");
    let mut model = Model::new(small_model(), 4).unwrap();
    for (_, p) in model.params.iter_mut() {
        p.value.data_mut().fill(0.0);
    }
    let ckpt = tmp.path().join("zero.ckpt");
    model.save(&ckpt).unwrap();
    let out = tmp.path().join("heat");
    let sample = &sample_files(&data)[2];
    let r = eeg4d(&["explain", "--checkpoint", s(&ckpt), "--sample", s(sample), "--class", "0", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let img = image::open(out.join("heatmap_class0.png")).unwrap().to_rgb8();
    let first = *img.get_pixel(0, 0);
    assert!(img.pixels().all(|p| *p == first));
}
