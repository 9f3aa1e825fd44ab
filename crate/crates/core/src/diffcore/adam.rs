//! Adam optimizer over a ParamSet.

use super::ParamSet;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators, aligned entry-by-entry with the ParamSet
/// the state was created from.
#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState { t: 0, m, v }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam step. `grads[i]` is the gradient for entry `i`
    /// of `params`, or `None` when the entry received no gradient this step
    /// (its moments still decay).
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<&[f64]>], lr: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Usage("adam gradient/parameter count mismatch".into()));
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("NaN/inf gradient in adam_step".into()));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let (_, tensor) = params.at_mut(i);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            match grads[i] {
                Some(g) => {
                    for j in 0..tensor.len() {
                        m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                        v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        tensor.data[j] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                    }
                }
                None => {
                    for j in 0..tensor.len() {
                        m[j] *= ADAM_BETA1;
                        v[j] *= ADAM_BETA2;
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        tensor.data[j] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Scale the whole gradient map so its global Euclidean norm is at most
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Option<Vec<f64>>], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter().flatten() {
        for &x in g {
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }
    norm
}
