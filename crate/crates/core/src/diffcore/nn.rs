//! MLP construction on top of the tape.
//!
//! Placement convention: normalization sits after each hidden linear layer and
//! before the rectifier; the output layer is always a plain linear layer so Q
//! outputs stay unbounded. Hyperspherical layers replace the hidden linear
//! transform itself (unit-norm weight rows, unit-norm input, learnable scale).

use super::tape::{NodeId, Tape, Tensor};
use super::ParamSet;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenNorm {
    None,
    LayerNorm,
    Hyperspherical,
}

/// Network shape description. Activation is fixed as ReLU.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_norm: HiddenNorm,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, hidden_norm: HiddenNorm) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("all MLP dims must be >= 1".into()));
        }
        if hidden_dims.is_empty() {
            return Err(Error::Config("hidden-dims must be non-empty".into()));
        }
        Ok(MlpSpec { input_dim, hidden_dims, output_dim, hidden_norm })
    }
}

/// Initialize parameters in the canonical order consumed by [`forward_mlp`].
///
/// Linear weights use uniform fan-in init; hyperspherical weight rows are unit
/// Gaussian draws normalized to the sphere with scales starting at 1.
pub fn init_mlp(spec: &MlpSpec, rng: &mut Rng) -> ParamSet {
    let mut ps = ParamSet::new();
    let mut fan_in = spec.input_dim;
    for (l, &h) in spec.hidden_dims.iter().enumerate() {
        match spec.hidden_norm {
            HiddenNorm::Hyperspherical => {
                let mut w = vec![0.0; h * fan_in];
                for row in 0..h {
                    let mut v: Vec<f64> = (0..fan_in).map(|_| rng.normal()).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    for x in v.iter_mut() {
                        *x /= n;
                    }
                    w[row * fan_in..(row + 1) * fan_in].copy_from_slice(&v);
                }
                ps.push(format!("hn_w{l}"), Tensor::new(h, fan_in, w));
                ps.push(format!("hn_s{l}"), Tensor::new(1, h, vec![1.0; h]));
            }
            _ => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w: Vec<f64> = (0..h * fan_in).map(|_| rng.uniform_in(-bound, bound)).collect();
                ps.push(format!("w{l}"), Tensor::new(h, fan_in, w));
                ps.push(format!("b{l}"), Tensor::zeros(1, h));
                if spec.hidden_norm == HiddenNorm::LayerNorm {
                    ps.push(format!("gamma{l}"), Tensor::new(1, h, vec![1.0; h]));
                    ps.push(format!("beta{l}"), Tensor::zeros(1, h));
                }
            }
        }
        fan_in = h;
    }
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w: Vec<f64> = (0..spec.output_dim * fan_in).map(|_| rng.uniform_in(-bound, bound)).collect();
    ps.push("wo", Tensor::new(spec.output_dim, fan_in, w));
    ps.push("bo", Tensor::zeros(1, spec.output_dim));
    ps
}

/// Forward pass on the tape. `param_ids` must be the leaves bound from a
/// ParamSet built by [`init_mlp`] for the same spec, in order.
pub fn forward_mlp(tape: &mut Tape, spec: &MlpSpec, param_ids: &[NodeId], input: NodeId) -> Result<NodeId> {
    let (_, in_cols) = tape.shape(input);
    if in_cols != spec.input_dim {
        return Err(Error::Config(format!(
            "mlp input dim mismatch: expected {}, got {}",
            spec.input_dim, in_cols
        )));
    }
    let mut k = 0;
    let mut next = || {
        let id = param_ids[k];
        k += 1;
        id
    };
    let mut h = input;
    for _ in &spec.hidden_dims {
        h = match spec.hidden_norm {
            HiddenNorm::None => {
                let z = tape.linear(h, next(), next())?;
                tape.relu(z)
            }
            HiddenNorm::LayerNorm => {
                let z = tape.linear(h, next(), next())?;
                let n = tape.layer_norm(z, next(), next(), LN_EPS)?;
                tape.relu(n)
            }
            HiddenNorm::Hyperspherical => {
                let z = tape.hn_linear(h, next(), next())?;
                tape.relu(z)
            }
        };
    }
    let out = tape.linear(h, next(), next())?;
    if k != param_ids.len() {
        return Err(Error::Config("mlp parameter count mismatch".into()));
    }
    Ok(out)
}

/// Plain single-sample forward without graph retention; used on hot rollout
/// paths where no gradients are needed.
pub fn forward_mlp_single(spec: &MlpSpec, params: &ParamSet, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != spec.input_dim {
        return Err(Error::Config(format!(
            "mlp input dim mismatch: expected {}, got {}",
            spec.input_dim,
            input.len()
        )));
    }
    let mut k = 0;
    let mut h = input.to_vec();
    for _ in &spec.hidden_dims {
        match spec.hidden_norm {
            HiddenNorm::None | HiddenNorm::LayerNorm => {
                let w = &params.at(k).1;
                let b = &params.at(k + 1).1;
                k += 2;
                let mut z = matvec(w, &h);
                for (zi, bi) in z.iter_mut().zip(b.data.iter()) {
                    *zi += bi;
                }
                if spec.hidden_norm == HiddenNorm::LayerNorm {
                    let gamma = &params.at(k).1;
                    let beta = &params.at(k + 1).1;
                    k += 2;
                    let f = z.len() as f64;
                    let mu = z.iter().sum::<f64>() / f;
                    let var = z.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / f;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    for i in 0..z.len() {
                        z[i] = gamma.data[i] * (z[i] - mu) * inv + beta.data[i];
                    }
                }
                h = z.into_iter().map(|v| v.max(0.0)).collect();
            }
            HiddenNorm::Hyperspherical => {
                let w = &params.at(k).1;
                let s = &params.at(k + 1).1;
                k += 2;
                let xn = h.iter().map(|&v| v * v).sum::<f64>().sqrt();
                let mut z = vec![0.0; w.rows];
                if xn >= 1e-12 {
                    for o in 0..w.rows {
                        let row = &w.data[o * w.cols..(o + 1) * w.cols];
                        let wn = row.iter().map(|&v| v * v).sum::<f64>().sqrt();
                        let dot: f64 = row.iter().zip(h.iter()).map(|(&a, &b)| a * b).sum();
                        z[o] = s.data[o] * dot / (xn * wn);
                    }
                }
                h = z.into_iter().map(|v| v.max(0.0)).collect();
            }
        }
    }
    let w = &params.at(k).1;
    let b = &params.at(k + 1).1;
    let mut out = matvec(w, &h);
    for (oi, bi) in out.iter_mut().zip(b.data.iter()) {
        *oi += bi;
    }
    Ok(out)
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; w.rows];
    for o in 0..w.rows {
        let row = &w.data[o * w.cols..(o + 1) * w.cols];
        let mut acc = 0.0;
        for i in 0..w.cols {
            acc += row[i] * x[i];
        }
        y[o] = acc;
    }
    y
}
