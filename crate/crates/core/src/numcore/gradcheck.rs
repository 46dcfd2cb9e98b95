use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Entries sampled per parameter tensor (all entries if the tensor is smaller).
    pub samples_per_param: usize,
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is numerically zero are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples_per_param: 8,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub entries_checked: usize,
    pub params_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares reverse-mode gradients of `loss_fn` with central differences
/// over a sampled subset of trainable entries. Frozen parameters are skipped.
///
/// `loss_fn` must be deterministic: it is re-evaluated for every perturbation.
pub fn grad_check<F>(
    store: &mut ParamStore<f64>,
    loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g)?;
        g.backward(loss)?
    };
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(s);
        let l = loss_fn(&mut g)?;
        Ok(g.value(l)[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ids: Vec<ParamId> = store.trainable_ids();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        entries_checked: 0,
        params_checked: 0,
    };
    for id in ids {
        let n = store.get(id).numel();
        if n == 0 {
            continue;
        }
        let mut entries: Vec<usize> = (0..n).collect();
        entries.shuffle(&mut rng);
        entries.truncate(opts.samples_per_param);
        let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        for k in entries {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + opts.step;
            let up = eval(store)?;
            store.get_mut(id).data_mut()[k] = orig - opts.step;
            let down = eval(store)?;
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic[k];
            let err = (numeric - a).abs() / numeric.abs().max(a.abs()).max(opts.floor);
            if err > report.max_rel_error || report.worst_param.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst_param = Some(store.name(id).to_string());
            }
            report.entries_checked += 1;
        }
        report.params_checked += 1;
    }
    Ok(report)
}
