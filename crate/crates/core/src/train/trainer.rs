use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diffcore::Graph;
use crate::error::{Error, Result};
use crate::model::{forward, loss, slice_batch, Model};
use crate::repr4d::{feature_subset, fit_normalizer, Sample4D};
use crate::train::{adam_step, kfold_split, AdamConfig, AdamState, EpochRecord, Fold, FoldMetrics, RunMetrics, TrainConfig};

/// SplitMix64 finalizer over the master seed and a stream tag.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut z = master;
    for &t in tags {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(t);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

const SPLIT_TAG: u64 = 0x0053_504c_4954;
const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Index of the first maximum.
pub fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `samples` whose predicted class matches the label.
pub fn evaluate(model: &Model, samples: &[Sample4D], batch: usize) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&Sample4D> = chunk.iter().collect();
        for (p, s) in model.predict(&refs)?.iter().zip(chunk) {
            correct += (argmax(p) == s.label as usize) as usize;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// A trained fold: its metrics and final parameters.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub metrics: FoldMetrics,
    pub model: Model,
}

/// Build the untrained fold model: feature subset applied, normalizer fitted
/// on the training indices only. Returns the model and the prepared
/// `(train, test)` sets.
pub fn prepare_fold(
    samples: &[Sample4D],
    fold: &Fold,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Model, Vec<Sample4D>, Vec<Sample4D>)> {
    let subset = |idx: &[usize]| -> Result<Vec<Sample4D>> {
        idx.iter().map(|&i| feature_subset(&samples[i], cfg.features, false)).collect()
    };
    let (train, test) = (subset(&fold.train)?, subset(&fold.test)?);
    let first = train.first().ok_or_else(|| Error::Data("empty training split".into()))?;
    let mut mcfg = cfg.model.clone();
    [mcfg.grid_h, mcfg.grid_w, mcfg.depth, mcfg.slices] = first.dims;
    let norm = fit_normalizer(&train, &occupancy(&train))?;
    let mut model = Model::new(mcfg, seed)?;
    model.features = cfg.features;
    let train = train.iter().map(|s| norm.normalize(s)).collect::<Result<_>>()?;
    let test = test.iter().map(|s| norm.normalize(s)).collect::<Result<_>>()?;
    model.normalizer = Some(norm);
    Ok((model, train, test))
}

/// Grid cells that are nonzero in any training sample; padding cells of a
/// sparse grid never are.
fn occupancy(train: &[Sample4D]) -> Vec<bool> {
    let [h, w, d, t] = train[0].dims;
    let block = d * t;
    (0..h * w)
        .map(|c| train.iter().any(|s| s.values[c * block..(c + 1) * block].iter().any(|&v| v != 0.0)))
        .collect()
}

/// Train one fold from scratch and score it.
pub fn train_fold(samples: &[Sample4D], fold: &Fold, cfg: &TrainConfig, seed: u64) -> Result<FoldOutcome> {
    let (mut model, train, test) = prepare_fold(samples, fold, cfg, seed)?;
    let adam = AdamConfig { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps };
    let mut state = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SHUFFLE_TAG]));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.max_epochs);
    let (subject, experiment) = (samples[fold.test[0]].subject, samples[fold.test[0]].experiment);
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let refs: Vec<&Sample4D> = batch.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = refs.iter().map(|s| s.label as usize).collect();
            let mut g = Graph::<f32>::new();
            let vars = model.params.register(&mut g);
            let x = g.constant(slice_batch(&model.config, &refs)?);
            let fwd = forward(&mut g, &model.config, &vars, x)?;
            let l = loss(&mut g, &fwd, &labels)?;
            g.backward(l)?;
            loss_sum += g.value(l).item() as f64 * batch.len() as f64;
            for (p, &y) in g.value(fwd.probs).data().chunks(model.config.classes).zip(&labels) {
                correct += (argmax(p) == y) as usize;
            }
            let grads = model.params.gradients(&g, &vars);
            adam_step(&mut model.params, &grads, &mut state, &adam);
        }
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            test_acc: evaluate(&model, &test, cfg.batch_size)?,
        };
        if !rec.loss.is_finite() {
            return Err(Error::Data(format!("training diverged at epoch {epoch}")));
        }
        log::info!(
            "subject {subject} experiment {experiment} seed {seed:#x} epoch {epoch}: loss {:.4} train {:.3} test {:.3}",
            rec.loss,
            rec.train_acc,
            rec.test_acc
        );
        let done = cfg.stop_at_train_acc.is_some_and(|t| rec.train_acc >= t);
        curve.push(rec);
        if done {
            break;
        }
    }
    let (best_epoch, best_test_acc) = curve
        .iter()
        .fold((0, f64::NEG_INFINITY), |b, r| if r.test_acc > b.1 { (r.epoch, r.test_acc) } else { b });
    let metrics = FoldMetrics {
        subject,
        experiment,
        fold: 0,
        n_train: train.len(),
        n_test: test.len(),
        test_acc: curve.last().map_or(evaluate(&model, &test, cfg.batch_size)?, |r| r.test_acc),
        train_acc: evaluate(&model, &train, cfg.batch_size)?,
        best_test_acc: best_test_acc.max(0.0),
        best_epoch,
        test_indices: fold.test.clone(),
        curve,
    };
    Ok(FoldOutcome { metrics, model })
}

/// k-fold cross-validation on one subject's experiment. Folds train in
/// parallel on the current rayon pool; results come back in fold order.
pub fn train_experiment(samples: &[Sample4D], cfg: &TrainConfig) -> Result<Vec<FoldOutcome>> {
    cfg.validate()?;
    let first = samples.first().ok_or_else(|| Error::Data("no samples".into()))?;
    if samples.len() < cfg.folds {
        return Err(Error::Data(format!("{} samples for {} folds", samples.len(), cfg.folds)));
    }
    if samples.iter().any(|s| s.dims != first.dims) {
        return Err(Error::Data("samples have mixed dimensions".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.label as usize >= cfg.model.classes) {
        return Err(Error::Data(format!("label {} outside {} classes", bad.label, cfg.model.classes)));
    }
    let (subject, experiment) = (first.subject as u64, first.experiment as u64);
    let labels: Vec<u32> = samples.iter().map(|s| s.label).collect();
    let folds = kfold_split(&labels, cfg.folds, derive_seed(cfg.seed, &[SPLIT_TAG, subject, experiment]))?;
    folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let seed = derive_seed(cfg.seed, &[subject, experiment, k as u64]);
            let mut out = train_fold(samples, fold, cfg, seed)?;
            out.metrics.fold = k;
            Ok(out)
        })
        .collect()
}

/// Group samples by `(subject, experiment)` and cross-validate each group.
pub fn group_experiments(samples: Vec<Sample4D>) -> BTreeMap<(u32, u32), Vec<Sample4D>> {
    let mut groups: BTreeMap<(u32, u32), Vec<Sample4D>> = BTreeMap::new();
    for s in samples {
        groups.entry((s.subject, s.experiment)).or_default().push(s);
    }
    groups
}

/// Result of [`train_dataset`]: aggregated metrics plus the fold model with
/// the highest final test accuracy (earliest on ties).
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub metrics: RunMetrics,
    pub best: Model,
}

pub fn train_dataset(samples: Vec<Sample4D>, cfg: &TrainConfig) -> Result<TrainRun> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to train on".into()));
    }
    let mut folds = Vec::new();
    let mut best: Option<(f64, Model)> = None;
    for (_, group) in group_experiments(samples) {
        for out in train_experiment(&group, cfg)? {
            if best.as_ref().is_none_or(|(acc, _)| out.metrics.test_acc > *acc) {
                best = Some((out.metrics.test_acc, out.model));
            }
            folds.push(out.metrics);
        }
    }
    Ok(TrainRun {
        metrics: RunMetrics::aggregate(folds),
        best: best.expect("at least one fold").1,
    })
}
