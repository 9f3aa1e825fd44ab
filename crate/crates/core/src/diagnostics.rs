//! Value-learning instruments: grounding error against Monte-Carlo anchors,
//! critic action sensitivity, value difference, and Q-value anatomy.

use std::path::Path;

use crate::agent::{combine, CriticEnsemble};
use crate::basepolicy::BasePolicy;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A held-out (state, base action, discounted return-to-go) triple collected
/// by rolling the frozen base controller.
#[derive(Debug, Clone)]
pub struct AnchorPoint {
    pub obs: Vec<f64>,
    pub a_base: Vec<f64>,
    pub ret: f64,
}

#[derive(Debug, Clone)]
pub struct AnchorSet {
    pub items: Vec<AnchorPoint>,
}

/// Keep the anchor set small enough that a grounding evaluation stays cheap.
const ANCHOR_CAP: usize = 2000;

/// Roll `episodes` base-only episodes and record every visited state with its
/// empirical discounted return. If the raw set exceeds the cap it is thinned
/// by a uniform stride so coverage across episodes is preserved.
pub fn collect_anchors(
    env: &mut dyn Env,
    base: &BasePolicy,
    gamma: f64,
    episodes: usize,
    rng: &mut Rng,
) -> Result<AnchorSet> {
    let mut items = Vec::new();
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let mut ep: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        let mut succeeded = false;
        loop {
            let a = base.base_action(&obs);
            let step = env.step(&a)?;
            if step.success {
                succeeded = true;
            }
            ep.push((obs, a, step.reward));
            obs = step.next_obs;
            if step.done {
                break;
            }
        }
        // Return-to-go by a backward sweep. Timed-out episodes are not true
        // terminals (the critic bootstraps through them), and the base
        // controller holds its failing equilibrium forever, so their tail
        // value is the perpetual-failure sum -1/(1-gamma) rather than 0.
        let mut g = if succeeded { 0.0 } else { -1.0 / (1.0 - gamma) };
        let mut rets = vec![0.0; ep.len()];
        for (i, (_, _, r)) in ep.iter().enumerate().rev() {
            g = r + gamma * g;
            rets[i] = g;
        }
        for ((obs, a_base, _), ret) in ep.into_iter().zip(rets) {
            items.push(AnchorPoint { obs, a_base, ret });
        }
    }
    if items.len() > ANCHOR_CAP {
        let stride = items.len() as f64 / ANCHOR_CAP as f64;
        items = (0..ANCHOR_CAP)
            .map(|i| items[(i as f64 * stride) as usize].clone())
            .collect();
    }
    if items.is_empty() {
        return Err(Error::Usage("anchor collection produced no points".into()));
    }
    Ok(AnchorSet { items })
}

/// Mean absolute error between the critic estimate at the base action and the
/// Monte-Carlo return, over the anchor set. The estimate is the mean of the
/// online heads' expectations.
pub fn grounding_error(critics: &CriticEnsemble, anchors: &AnchorSet) -> Result<f64> {
    let mut acc = 0.0;
    for p in &anchors.items {
        acc += (critics.q_mean(&p.obs, &p.a_base)? - p.ret).abs();
    }
    Ok(acc / anchors.items.len() as f64)
}

/// (mean critic estimate, mean Monte-Carlo return) over the anchor set.
pub fn anchor_stats(critics: &CriticEnsemble, anchors: &AnchorSet) -> Result<(f64, f64)> {
    let mut q = 0.0;
    let mut r = 0.0;
    for p in &anchors.items {
        q += critics.q_mean(&p.obs, &p.a_base)?;
        r += p.ret;
    }
    let n = anchors.items.len() as f64;
    Ok((q / n, r / n))
}

/// Mean gradient norm of the critic with respect to the *residual* action,
/// E ||d Q(s, clip(a_base + lambda a_res)) / d a_res||, averaged over the
/// batch and over online heads. By the chain rule this equals lambda times
/// the gradient norm with respect to the summed action wherever the clip is
/// inactive.
pub fn critic_sensitivity(
    critics: &CriticEnsemble,
    obs: &[Vec<f64>],
    a_base: &[Vec<f64>],
    a_res: &[Vec<f64>],
    lambda: f64,
) -> Result<f64> {
    let b = obs.len();
    if b == 0 || a_base.len() != b || a_res.len() != b {
        return Err(Error::Usage("critic_sensitivity batch mismatch".into()));
    }
    let od = obs[0].len();
    let ad = a_base[0].len();
    let mut tape = crate::diffcore::Tape::new();
    let obs_leaf = tape.leaf(b, od, obs.concat(), false);
    let base_leaf = tape.leaf(b, ad, a_base.concat(), false);
    let res_leaf = tape.leaf(b, ad, a_res.concat(), true);
    let scaled = tape.scale(res_leaf, lambda);
    let summed = tape.add(base_leaf, scaled);
    let exec = tape.clamp(summed, -1.0, 1.0);
    let input = tape.concat(obs_leaf, exec)?;
    let mut q_acc: Option<crate::diffcore::NodeId> = None;
    for h in 0..critics.num_heads() {
        let raw = critics.forward_on_tape(&mut tape, h, input, false)?;
        let e = critics.expectation_on_tape(&mut tape, raw)?;
        q_acc = Some(match q_acc {
            None => e,
            Some(acc) => tape.add(acc, e),
        });
    }
    let q_mean_heads = tape.scale(q_acc.unwrap(), 1.0 / critics.num_heads() as f64);
    // Rows are independent, so summing over the batch gives every row its
    // exact own gradient.
    let m = tape.mean_all(q_mean_heads);
    let total = tape.scale(m, b as f64);
    let grads = tape.backward(total)?;
    let g = grads
        .get(res_leaf)
        .ok_or_else(|| Error::Numeric("no gradient reached the residual action".into()))?;
    let mut acc = 0.0;
    for r in 0..b {
        let row = &g[r * ad..(r + 1) * ad];
        acc += row.iter().map(|&x| x * x).sum::<f64>().sqrt();
    }
    Ok(acc / b as f64)
}

/// Mean |Q(s, clip(a_base + lambda a_res)) - Q(s, a_base)| over a batch, with
/// Q the mean of online-head expectations.
pub fn value_difference(
    critics: &CriticEnsemble,
    obs: &[Vec<f64>],
    a_base: &[Vec<f64>],
    a_res: &[Vec<f64>],
    lambda: f64,
) -> Result<f64> {
    let b = obs.len();
    if b == 0 || a_base.len() != b || a_res.len() != b {
        return Err(Error::Usage("value_difference batch mismatch".into()));
    }
    let mut acc = 0.0;
    for i in 0..b {
        let full = combine(&a_base[i], &a_res[i], lambda)?;
        acc += (critics.q_mean(&obs[i], &full)? - critics.q_mean(&obs[i], &a_base[i])?).abs();
    }
    Ok(acc / b as f64)
}

// ---------------------------------------------------------------------------
// Q-value anatomy
// ---------------------------------------------------------------------------

/// Decomposition of what the residual changes about the critic's view: the
/// mean value shift it induces and how separable base and full actions are
/// along the dominant action direction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QAnatomy {
    pub mean_q_base: f64,
    pub mean_q_full: f64,
    /// mean Q(s, a_base + lambda a_res) - mean Q(s, a_base).
    pub delta_mu: f64,
    /// First principal component of the pooled (base + full) action set.
    pub principal_component: Vec<f64>,
    pub proj_mean_base: f64,
    pub proj_mean_full: f64,
    pub proj_std_pooled: f64,
    /// |proj_mean_full - proj_mean_base| / proj_std_pooled.
    pub separation: f64,
    /// Covariance had no usable dominant direction; the first axis was used.
    pub degenerate_pc: bool,
}

pub const POWER_ITERS: usize = 100;
pub const POWER_TOL: f64 = 1e-9;

/// Dominant eigenvector of a symmetric matrix by power iteration. Returns
/// (unit eigenvector, eigenvalue, degenerate). Degenerate covariances (zero
/// matrix, or no convergence toward a dominant direction) fall back to the
/// first coordinate axis with the flag set.
pub fn power_iteration(cov: &[f64], dim: usize, iters: usize, tol: f64) -> (Vec<f64>, f64, bool) {
    assert_eq!(cov.len(), dim * dim);
    let frob: f64 = cov.iter().map(|&x| x * x).sum::<f64>().sqrt();
    let mut axis = vec![0.0; dim];
    axis[0] = 1.0;
    if frob < 1e-300 {
        return (axis, 0.0, true);
    }
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 / ((i + 1) as f64)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let mut w = vec![0.0; dim];
        for r in 0..dim {
            for c in 0..dim {
                w[r] += cov[r * dim + c] * v[c];
            }
        }
        let n = w.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if n < 1e-300 {
            return (axis, 0.0, true);
        }
        for x in w.iter_mut() {
            *x /= n;
        }
        let diff: f64 = w.iter().zip(v.iter()).map(|(&a, &b)| (a - b).abs()).sum();
        v = w;
        lambda = n;
        if diff < tol {
            break;
        }
    }
    (v, lambda, false)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|&x| x * x).sum::<f64>().sqrt().max(1e-300);
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Compute the anatomy report over paired (obs, a_base, a_res) samples.
pub fn q_anatomy(
    critics: &CriticEnsemble,
    obs: &[Vec<f64>],
    a_base: &[Vec<f64>],
    a_res: &[Vec<f64>],
    lambda: f64,
) -> Result<QAnatomy> {
    let b = obs.len();
    if b == 0 || a_base.len() != b || a_res.len() != b {
        return Err(Error::Usage("q_anatomy batch mismatch".into()));
    }
    let ad = a_base[0].len();
    let mut q_base = Vec::with_capacity(b);
    let mut q_full = Vec::with_capacity(b);
    let mut full_actions = Vec::with_capacity(b);
    for i in 0..b {
        let full = combine(&a_base[i], &a_res[i], lambda)?;
        q_base.push(critics.q_mean(&obs[i], &a_base[i])?);
        q_full.push(critics.q_mean(&obs[i], &full)?);
        full_actions.push(full);
    }
    let mean_q_base = mean(&q_base);
    let mean_q_full = mean(&q_full);

    // principal component of the pooled action cloud
    let pooled: Vec<&Vec<f64>> = a_base.iter().chain(full_actions.iter()).collect();
    let n = pooled.len() as f64;
    let mut mu = vec![0.0; ad];
    for a in &pooled {
        for i in 0..ad {
            mu[i] += a[i];
        }
    }
    for m in mu.iter_mut() {
        *m /= n;
    }
    let mut cov = vec![0.0; ad * ad];
    for a in &pooled {
        for r in 0..ad {
            for c in 0..ad {
                cov[r * ad + c] += (a[r] - mu[r]) * (a[c] - mu[c]);
            }
        }
    }
    for x in cov.iter_mut() {
        *x /= n;
    }
    let (pc, _, degenerate_pc) = power_iteration(&cov, ad, POWER_ITERS, POWER_TOL);

    let proj = |a: &Vec<f64>| -> f64 { a.iter().zip(pc.iter()).map(|(&x, &p)| x * p).sum() };
    let proj_base: Vec<f64> = a_base.iter().map(proj).collect();
    let proj_full: Vec<f64> = full_actions.iter().map(proj).collect();
    let proj_mean_base = mean(&proj_base);
    let proj_mean_full = mean(&proj_full);
    let pooled_projs: Vec<f64> = proj_base.iter().chain(proj_full.iter()).cloned().collect();
    let pm = mean(&pooled_projs);
    let proj_std_pooled = (pooled_projs.iter().map(|&x| (x - pm) * (x - pm)).sum::<f64>()
        / pooled_projs.len() as f64)
        .sqrt();
    let separation = if proj_std_pooled > 0.0 {
        (proj_mean_full - proj_mean_base).abs() / proj_std_pooled
    } else {
        0.0
    };
    Ok(QAnatomy {
        mean_q_base,
        mean_q_full,
        delta_mu: mean_q_full - mean_q_base,
        principal_component: pc,
        proj_mean_base,
        proj_mean_full,
        proj_std_pooled,
        separation,
        degenerate_pc,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Write a fixed-bin histogram of `values` as a two-column CSV (bin center,
/// count).
pub fn write_histogram(path: &Path, values: &[f64], bins: usize) -> Result<()> {
    if values.is_empty() || bins == 0 {
        return Err(Error::Usage("histogram needs values and bins".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let mut idx = ((v - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    let mut out = String::from("bin_center,count\n");
    for (i, c) in counts.iter().enumerate() {
        let center = lo + width * (i as f64 + 0.5);
        out.push_str(&format!("{center},{c}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
