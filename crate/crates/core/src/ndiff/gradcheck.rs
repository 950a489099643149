use rand::seq::index::sample;

use crate::Scalar;

use super::{seeded_rng, Graph, NdiffError, ParamSet, Var};

/// Loss and analytic gradient of one deterministic evaluation.
pub struct Evaluation<T> {
    pub loss: T,
    pub grads: ParamSet<T>,
    pub dropout_active: bool,
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// Runs backward from `root` and packages the result for [`grad_check`].
    pub fn evaluate(&self, root: Var) -> Result<Evaluation<T>, NdiffError> {
        let grads = self.backward(root)?.into_params();
        Ok(Evaluation {
            loss: self.value(root).item(),
            grads,
            dropout_active: self.dropout_active(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub epsilon: f64,
    /// Pass threshold on the worst relative error.
    pub tolerance: f64,
    /// Denominator floor: relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Check at most this many coordinates per parameter group.
    pub max_coords_per_group: Option<usize>,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            max_coords_per_group: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter group and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compares the analytic gradient of `f` with central differences.
///
/// `f` must be deterministic; any evaluation that ran active dropout is
/// rejected with a contract error.
pub fn grad_check<T, E, F>(params: &ParamSet<T>, opts: &GradCheckOptions, mut f: F) -> Result<GradCheckReport, E>
where
    T: Scalar,
    E: From<NdiffError>,
    F: FnMut(&ParamSet<T>) -> Result<Evaluation<T>, E>,
{
    let mut eval = |p: &ParamSet<T>| -> Result<Evaluation<T>, E> {
        let e = f(p)?;
        if e.dropout_active {
            return Err(NdiffError::Contract("gradient check requires dropout to be disabled".into()).into());
        }
        Ok(e)
    };
    let base = eval(params)?;
    base.grads.check_congruent(params).map_err(E::from)?;
    let mut rng = seeded_rng(opts.seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        tolerance: opts.tolerance,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let len = params.get(&name).map_err(E::from)?.len();
        let coords: Vec<usize> = match opts.max_coords_per_group {
            Some(k) if k < len => {
                let mut c = sample(&mut rng, len, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        let analytic = base.grads.get(&name).map_err(E::from)?.to_f64_vec();
        for k in coords {
            let original = params.get(&name).map_err(E::from)?.data()[k];
            let h = T::of(opts.epsilon);
            work.get_mut(&name).map_err(E::from)?.data_mut()[k] = original + h;
            let plus = eval(&work)?.loss.as_f64();
            work.get_mut(&name).map_err(E::from)?.data_mut()[k] = original - h;
            let minus = eval(&work)?.loss.as_f64();
            work.get_mut(&name).map_err(E::from)?.data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), k));
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
