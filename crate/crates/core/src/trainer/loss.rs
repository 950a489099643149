use crate::ndiff::{Graph, Var};
use crate::worldsim::Action;
use crate::Scalar;

use super::TrainError;

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Loss of one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// `-Σ_t ln P(a*_t)`.
    pub total: f64,
    /// `total / T`, for reporting.
    pub per_step: f64,
    /// Steps whose gold probability hit the floor.
    pub clamped: usize,
}

fn length_check(dists: usize, gold: usize) -> Result<(), TrainError> {
    if dists != gold {
        return Err(TrainError::Config(format!(
            "{dists} distributions for {gold} gold actions"
        )));
    }
    Ok(())
}

/// Negative log-likelihood of `gold` under per-step distributions.
pub fn sequence_loss(distributions: &[Vec<f64>], gold: &[Action]) -> Result<LossValue, TrainError> {
    length_check(distributions.len(), gold.len())?;
    let mut total = 0.0;
    let mut clamped = 0;
    for (d, a) in distributions.iter().zip(gold) {
        let p = d[a.index()];
        if p < PROB_FLOOR {
            clamped += 1;
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    let per_step = if gold.is_empty() {
        0.0
    } else {
        total / gold.len() as f64
    };
    Ok(LossValue {
        total,
        per_step,
        clamped,
    })
}

/// Graph version of [`sequence_loss`]; the clamp count accrues on the graph.
pub fn sequence_loss_var<T: Scalar>(g: &mut Graph<'_, T>, probs: &[Var], gold: &[Action]) -> Result<Var, TrainError> {
    length_check(probs.len(), gold.len())?;
    let mut logs = Vec::with_capacity(gold.len());
    for (&p, a) in probs.iter().zip(gold) {
        let picked = g.pick(p, a.index())?;
        logs.push(g.ln(picked, T::of(PROB_FLOOR)));
    }
    let sum = g.add_n(&logs)?;
    Ok(g.scale(sum, -T::one()))
}
