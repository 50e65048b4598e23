use std::fmt::Write as _;

use crate::error::Result;
use crate::model::AttentionFlags;
use crate::repr4d::Sample4D;
use crate::train::{train_dataset, RunMetrics, TrainConfig};

/// The five attention combinations compared by [`ablation_sweep`], in order.
pub const ABLATION_COMBOS: [AttentionFlags; 5] = [
    AttentionFlags::ALL,
    AttentionFlags { spectral: false, spatial: true, temporal: true },
    AttentionFlags { spectral: true, spatial: false, temporal: true },
    AttentionFlags { spectral: true, spatial: true, temporal: false },
    AttentionFlags::NONE,
];

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub flags: AttentionFlags,
    pub metrics: RunMetrics,
}

/// Cross-validate every combination with the same seed, hence the same
/// splits and the same initial values for every shared parameter.
pub fn ablation_sweep(samples: &[Sample4D], cfg: &TrainConfig) -> Result<Vec<AblationRow>> {
    ABLATION_COMBOS
        .iter()
        .map(|&flags| {
            let mut c = cfg.clone();
            c.model.attention = flags;
            let run = train_dataset(samples.to_vec(), &c)?;
            Ok(AblationRow { flags, metrics: run.metrics })
        })
        .collect()
}

/// `combo,spectral,spatial,temporal,acc,std,mean_fold_acc,delta_vs_all` table.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let base = rows.first().map_or(0.0, |r| r.metrics.acc);
    let mut out = String::from("combo,spectral,spatial,temporal,acc,std,mean_fold_acc,delta_vs_all\n");
    for r in rows {
        let f = r.flags;
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:+.6}",
            f.label(),
            f.spectral as u8,
            f.spatial as u8,
            f.temporal as u8,
            r.metrics.acc,
            r.metrics.std,
            r.metrics.mean_test_acc(),
            r.metrics.acc - base
        )
        .expect("string write");
    }
    out
}
