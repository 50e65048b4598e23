use std::fs;
use std::path::{Path, PathBuf};

use eeg4d_core::explain::{gradcam_pp, render_heatmap, top_channels};
use eeg4d_core::model::{AttentionFlags, Model, ModelConfig};
use eeg4d_core::repr4d::{feature_subset, load_layout, read_samples, to_grid, ElectrodeLayout, FeatureMode, Sample4D};
use eeg4d_core::sigproc::{extract_features, segment, FilterBank, RawRecording};
use eeg4d_core::train::{ablation_sweep, ablation_table, curve_csv, synth_dataset, train_dataset, SynthSpec, TrainConfig};
use rayon::prelude::*;

use crate::error::{io_error, CliError};
use crate::settings::Settings;

const COMMON_KEYS: &[&str] = &["seed", "jobs", "layout", "out"];
const FEATURIZE_KEYS: &[&str] = &["input", "features", "segment_seconds", "window_seconds"];
const SYNTH_KEYS: &[&str] = &[
    "features",
    "per_class",
    "classes",
    "amplitude",
    "noise",
    "focus_slice",
    "subject",
    "experiment",
];
const TRAIN_KEYS: &[&str] = &[
    "input",
    "features",
    "spectral_attn",
    "spatial_attn",
    "temporal_attn",
    "classes",
    "lr",
    "batch_size",
    "epochs",
    "folds",
    "stop_at_train_acc",
    "beta1",
    "beta2",
    "eps",
    "conv_channels",
    "conv_kernels",
    "fc_units",
    "lstm_units",
    "temporal_hidden",
    "reduction",
    "spatial_kernel",
    "ablate",
];
const EXPLAIN_KEYS: &[&str] = &["checkpoint", "sample", "index", "class", "labels"];

fn layout(s: &Settings) -> Result<ElectrodeLayout, CliError> {
    match s.raw("layout") {
        Some(p) => Ok(load_layout(Path::new(p))?),
        None => Ok(ElectrodeLayout::seed62()),
    }
}

/// Create the output directory and write `resolved.cfg` into it.
fn prepare_out(s: &Settings, command: &str, keys: &[&str]) -> Result<PathBuf, CliError> {
    let out = PathBuf::from(s.require("out")?);
    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let all: Vec<&str> = COMMON_KEYS.iter().chain(keys).copied().collect();
    write(&out.join("resolved.cfg"), s.snapshot(command, &all))?;
    Ok(out)
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Regular files in `dir` with extension `ext`, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn features(s: &Settings) -> Result<FeatureMode, CliError> {
    s.get("features")
}

fn featurize_file(path: &Path, s: &Settings, layout: &ElectrodeLayout, out: &Path) -> Result<usize, CliError> {
    let seg_s: f64 = s.get("segment_seconds")?;
    let win_s: f64 = s.get("window_seconds")?;
    let mode = features(s)?;
    let rec = RawRecording::read(path)?.reorder(&layout.channel_names())?;
    let bank = FilterBank::canonical(rec.fs)?;
    let stem = path.file_stem().map_or_else(|| "rec".into(), |s| s.to_string_lossy().into_owned());
    let segments = segment(&rec, seg_s);
    for seg in &segments {
        let feat = extract_features(seg, &bank, win_s)?;
        let mut sample = to_grid(&feat, layout)?;
        sample.subject = seg.subject;
        sample.experiment = seg.experiment;
        let sample = feature_subset(&sample, mode, false)?;
        sample.write(&out.join(format!("{stem}_{:04}.e4da", seg.index)))?;
    }
    Ok(segments.len())
}

pub fn featurize(s: &Settings) -> Result<(), CliError> {
    let input = PathBuf::from(s.require("input")?);
    let out = prepare_out(s, "featurize", FEATURIZE_KEYS)?;
    let layout = layout(s)?;
    features(s)?;
    let files = files_with_ext(&input, "e4dr")?;
    if files.is_empty() {
        eprintln!("warning: no raw recordings (*.e4dr) in {}", input.display());
        return Ok(());
    }
    let results: Vec<_> = files.par_iter().map(|f| featurize_file(f, s, &layout, &out)).collect();
    let mut failed = 0;
    let mut written = 0;
    for (file, res) in files.iter().zip(results) {
        match res {
            Ok(n) => written += n,
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", file.display());
            }
        }
    }
    println!("wrote {written} samples from {} recordings", files.len() - failed);
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} of {} recordings failed", files.len())));
    }
    Ok(())
}

pub fn synth(s: &Settings) -> Result<(), CliError> {
    let out = prepare_out(s, "synth", SYNTH_KEYS)?;
    let spec = SynthSpec {
        classes: s.get("classes")?,
        per_class: s.get("per_class")?,
        seed: s.get("seed")?,
        amplitude: s.get("amplitude")?,
        noise: s.get("noise")?,
        focus_slice: s.get_opt("focus_slice")?,
        subject: s.get("subject")?,
        experiment: s.get("experiment")?,
        ..SynthSpec::default()
    };
    let mode = features(s)?;
    let samples = synth_dataset(&spec, &layout(s)?)?;
    for (i, sample) in samples.iter().enumerate() {
        feature_subset(sample, mode, false)?.write(&out.join(format!("synth_{i:04}.e4da")))?;
    }
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn train_config(s: &Settings) -> Result<TrainConfig, CliError> {
    let model = ModelConfig {
        conv_channels: s.get_list("conv_channels")?,
        conv_kernels: s.get_list("conv_kernels")?,
        fc_units: s.get("fc_units")?,
        lstm_units: s.get("lstm_units")?,
        temporal_hidden: s.get("temporal_hidden")?,
        classes: s.get("classes")?,
        reduction: s.get("reduction")?,
        spatial_kernel: s.get("spatial_kernel")?,
        attention: AttentionFlags {
            spectral: s.get("spectral_attn")?,
            spatial: s.get("spatial_attn")?,
            temporal: s.get("temporal_attn")?,
        },
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        lr: s.get("lr")?,
        batch_size: s.get("batch_size")?,
        max_epochs: s.get("epochs")?,
        folds: s.get("folds")?,
        seed: s.get("seed")?,
        beta1: s.get("beta1")?,
        beta2: s.get("beta2")?,
        eps: s.get("eps")?,
        features: features(s)?,
        stop_at_train_acc: s.get_opt("stop_at_train_acc")?,
        model,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_samples(s: &Settings) -> Result<Vec<Sample4D>, CliError> {
    let input = PathBuf::from(s.require("input")?);
    let mut samples = Vec::new();
    for file in files_with_ext(&input, "e4da")? {
        samples.extend(read_samples(&file)?);
    }
    if samples.is_empty() {
        return Err(CliError::Data(format!("no sample files (*.e4da) in {}", input.display())));
    }
    Ok(samples)
}

fn write_ablation(samples: &[Sample4D], cfg: &TrainConfig, out: &Path) -> Result<(), CliError> {
    let rows = ablation_sweep(samples, cfg)?;
    write(&out.join("ablation.csv"), ablation_table(&rows))?;
    println!("ablation table: {}", out.join("ablation.csv").display());
    Ok(())
}

pub fn train(s: &Settings) -> Result<(), CliError> {
    let cfg = train_config(s)?;
    let out = prepare_out(s, "train", TRAIN_KEYS)?;
    let samples = load_samples(s)?;
    let run = train_dataset(samples.clone(), &cfg)?;
    let m = &run.metrics;
    run.best.save(&out.join("model.ckpt"))?;
    write(&out.join("metrics.csv"), m.to_csv())?;
    let json = serde_json::to_string_pretty(&m.summary_json()).map_err(|e| CliError::Internal(e.to_string()))?;
    write(&out.join("metrics.json"), json + "\n")?;
    let curves = out.join("curves");
    fs::create_dir_all(&curves).map_err(|e| io_error(&curves, e))?;
    let mut log = String::new();
    for f in &m.folds {
        let name = format!("s{}_e{}_f{}.csv", f.subject, f.experiment, f.fold);
        write(&curves.join(name), curve_csv(&f.curve))?;
        log.push_str(&format!(
            "subject {} experiment {} fold {}: train {} test {} ({} / {} samples), best test {} at epoch {}\n",
            f.subject, f.experiment, f.fold, f.train_acc, f.test_acc, f.n_train, f.n_test, f.best_test_acc, f.best_epoch
        ));
    }
    log.push_str(&format!("overall acc {} std {}\n", m.acc, m.std));
    write(&out.join("train.log"), &log)?;
    print!("{log}");
    if s.get::<bool>("ablate")? {
        write_ablation(&samples, &cfg, &out)?;
    }
    Ok(())
}

pub fn ablate(s: &Settings) -> Result<(), CliError> {
    let cfg = train_config(s)?;
    let out = prepare_out(s, "ablate", TRAIN_KEYS)?;
    write_ablation(&load_samples(s)?, &cfg, &out)
}

pub fn explain(s: &Settings) -> Result<(), CliError> {
    let class: usize = s.get("class")?;
    let index: usize = s.get("index")?;
    let out = prepare_out(s, "explain", EXPLAIN_KEYS)?;
    let layout = layout(s)?;
    let model = Model::load(Path::new(s.require("checkpoint")?))?;
    if class >= model.config.classes {
        return Err(CliError::Usage(format!("class {class} outside 0..{}", model.config.classes)));
    }
    let sample_path = PathBuf::from(s.require("sample")?);
    let samples = read_samples(&sample_path)?;
    let sample = samples
        .get(index)
        .ok_or_else(|| CliError::Usage(format!("index {index} but {} holds {}", sample_path.display(), samples.len())))?;
    let heatmap = gradcam_pp(&model, sample, class)?;
    let files = render_heatmap(&heatmap, &layout, &out.join(format!("heatmap_class{class}.png")), s.get("labels")?)?;
    for (rank, (ch, v)) in top_channels(&heatmap, &layout, 3).iter().enumerate() {
        println!("{}. {ch} {v:.4}", rank + 1);
    }
    println!("{}\n{}", files.png.display(), files.csv.display());
    Ok(())
}
