use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Graph, ParamStore, ParamVars, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates checked per tensor; smaller tensors are checked exhaustively.
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            samples_per_tensor: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|a - n| / max(1, |a|, |n|)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±h probes crossed a relu/max/floor branch.
    pub skipped_kinks: usize,
    /// `(parameter, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

fn evaluate<L>(params: &ParamStore<f64>, loss: &L) -> Result<(f64, Option<u64>)>
where
    L: Fn(&mut Graph<f64>, &ParamVars) -> Result<Var>,
{
    let mut g = Graph::with_kink_tracking();
    let vars = params.register(&mut g);
    let out = loss(&mut g, &vars)?;
    Ok((g.value(out).item(), g.pattern()))
}

/// Compare reverse-mode gradients of `loss` against central differences.
///
/// Probes whose perturbed evaluations take a different piecewise branch than
/// the base point are skipped, so relu and max-pool kinks do not register as
/// errors.
pub fn grad_check<L>(
    params: &ParamStore<f64>,
    loss: L,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    L: Fn(&mut Graph<f64>, &ParamVars) -> Result<Var>,
{
    let mut g = Graph::with_kink_tracking();
    let vars = params.register(&mut g);
    let out = loss(&mut g, &vars)?;
    let base_pattern = g.pattern();
    g.backward(out)?;
    let analytic = params.gradients(&g, &vars);
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    for (name, p) in params.iter() {
        let n = p.value.len();
        let coords: Vec<usize> = if n <= cfg.samples_per_tensor {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.samples_per_tensor).into_vec()
        };
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::Data(format!("no gradient for {name}")))?;
        for idx in coords {
            let orig = p.value.data()[idx];
            probe.get_mut(name).expect("cloned store").data_mut()[idx] = orig + cfg.h;
            let (fp, pp) = evaluate(&probe, &loss)?;
            probe.get_mut(name).expect("cloned store").data_mut()[idx] = orig - cfg.h;
            let (fm, pm) = evaluate(&probe, &loss)?;
            probe.get_mut(name).expect("cloned store").data_mut()[idx] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * cfg.h);
            let a = grad.data()[idx];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((name.to_string(), idx, a, numeric));
                }
            }
        }
    }
    Ok(report)
}
