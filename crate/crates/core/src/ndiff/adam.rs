use serde::{Deserialize, Serialize};

use crate::Scalar;

use super::{NdiffError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: ParamSet<T>,
    second: ParamSet<T>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<(), NdiffError> {
        params.check_congruent(grads)?;
        params.check_congruent(&self.first)?;
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let correct1 = T::one() - T::of(c.beta1.powi(t));
        let correct2 = T::one() - T::of(c.beta2.powi(t));
        let (lr, eps) = (T::of(c.step_size), T::of(c.epsilon));
        let moments = self.first.iter_mut().zip(self.second.iter_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = b1 * m[k] + (T::one() - b1) * gk;
                v[k] = b2 * v[k] + (T::one() - b2) * gk * gk;
                let m_hat = m[k] / correct1;
                let v_hat = v[k] / correct2;
                p[k] = p[k] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Plain gradient descent: `p -= lr * g`.
pub fn sgd_step<T: Scalar>(params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64) -> Result<(), NdiffError> {
    params.check_congruent(grads)?;
    let lr = T::of(lr);
    for ((_, p), (_, g)) in params.iter_mut().zip(grads.iter()) {
        for (pk, &gk) in p.data_mut().iter_mut().zip(g.data()) {
            *pk = *pk - lr * gk;
        }
    }
    Ok(())
}
