use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Running accuracy over the epoch's minibatches.
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub subject: u32,
    pub experiment: u32,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Test accuracy after the last epoch.
    pub test_acc: f64,
    /// Accuracy on the training split after the last epoch.
    pub train_acc: f64,
    pub best_test_acc: f64,
    pub best_epoch: usize,
    /// Indices of the held-out samples within the experiment's sample list.
    pub test_indices: Vec<usize>,
    pub curve: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    pub subject: u32,
    pub experiment: u32,
    /// Mean final-epoch test accuracy over folds.
    pub acc: f64,
    pub best_acc: f64,
    pub train_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub subject: u32,
    /// Mean of the subject's experiment accuracies.
    pub acc: f64,
    /// Population standard deviation of those accuracies.
    pub std: f64,
    pub experiments: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub folds: Vec<FoldMetrics>,
    pub experiments: Vec<ExperimentMetrics>,
    pub subjects: Vec<SubjectMetrics>,
    /// Mean of subject accuracies.
    pub acc: f64,
    /// Mean of subject standard deviations.
    pub std: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    mean(xs.iter().map(|x| (x - m).powi(2))).sqrt()
}

impl RunMetrics {
    /// Roll fold results up to experiments, subjects and the overall figure.
    pub fn aggregate(mut folds: Vec<FoldMetrics>) -> Self {
        folds.sort_by_key(|f| (f.subject, f.experiment, f.fold));
        let mut by_exp: BTreeMap<(u32, u32), Vec<&FoldMetrics>> = BTreeMap::new();
        for f in &folds {
            by_exp.entry((f.subject, f.experiment)).or_default().push(f);
        }
        let experiments: Vec<ExperimentMetrics> = by_exp
            .into_iter()
            .map(|((subject, experiment), fs)| ExperimentMetrics {
                subject,
                experiment,
                acc: mean(fs.iter().map(|f| f.test_acc)),
                best_acc: mean(fs.iter().map(|f| f.best_test_acc)),
                train_acc: mean(fs.iter().map(|f| f.train_acc)),
            })
            .collect();
        let mut by_subject: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for e in &experiments {
            by_subject.entry(e.subject).or_default().push(e.acc);
        }
        let subjects: Vec<SubjectMetrics> = by_subject
            .into_iter()
            .map(|(subject, accs)| SubjectMetrics {
                subject,
                acc: mean(accs.iter().copied()),
                std: population_std(&accs),
                experiments: accs.len(),
            })
            .collect();
        Self {
            acc: mean(subjects.iter().map(|s| s.acc)),
            std: mean(subjects.iter().map(|s| s.std)),
            folds,
            experiments,
            subjects,
        }
    }

    pub fn mean_test_acc(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.test_acc))
    }

    pub fn mean_train_acc(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.train_acc))
    }

    /// `subject,experiment,fold,accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject,experiment,fold,accuracy\n");
        for f in &self.folds {
            writeln!(out, "{},{},{},{:.6}", f.subject, f.experiment, f.fold, f.test_acc).expect("string write");
        }
        out
    }

    /// Summary table of per-subject and overall ACC/STD without curves.
    pub fn summary_json(&self) -> serde_json::Value {
        let folds: Vec<_> = self
            .folds
            .iter()
            .map(|f| {
                serde_json::json!({
                    "subject": f.subject,
                    "experiment": f.experiment,
                    "fold": f.fold,
                    "n_train": f.n_train,
                    "n_test": f.n_test,
                    "test_acc": f.test_acc,
                    "train_acc": f.train_acc,
                    "best_test_acc": f.best_test_acc,
                    "best_epoch": f.best_epoch,
                })
            })
            .collect();
        serde_json::json!({
            "overall": { "acc": self.acc, "std": self.std },
            "subjects": self.subjects,
            "experiments": self.experiments,
            "folds": folds,
        })
    }
}

/// `epoch,loss,train_acc,test_acc` lines for one fold.
pub fn curve_csv(curve: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,train_acc,test_acc\n");
    for r in curve {
        writeln!(out, "{},{:.6},{:.6},{:.6}", r.epoch, r.loss, r.train_acc, r.test_acc).expect("string write");
    }
    out
}
