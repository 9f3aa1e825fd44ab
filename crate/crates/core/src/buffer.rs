//! Replay buffer and warmup data collection.

use std::collections::VecDeque;
use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

use crate::agent::combine;
use crate::basepolicy::BasePolicy;
use crate::config::{WarmupKind, WarmupStrategy};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub a_base: Vec<f64>,
    pub a_res: Vec<f64>,
    pub a_executed: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub episode_id: u64,
}

/// FIFO replay buffer with uniform with-replacement sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer { capacity, items: VecDeque::new() })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn sample<'a>(&'a self, batch: usize, rng: &mut Rng) -> Result<Vec<&'a Transition>> {
        if self.items.is_empty() {
            return Err(Error::Usage("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch).map(|_| &self.items[rng.index(self.items.len())]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Serialize to `<stem>.json` (shape manifest) and `<stem>.bin`
    /// (little-endian f64 payload).
    pub fn dump(&self, stem: &Path) -> Result<()> {
        let first = self.items.front();
        let (od, ad) = first.map(|t| (t.obs.len(), t.a_base.len())).unwrap_or((0, 0));
        let manifest = serde_json::json!({
            "capacity": self.capacity,
            "len": self.items.len(),
            "obs_dim": od,
            "act_dim": ad,
        });
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&manifest)?)?;
        let mut f = std::fs::File::create(stem.with_extension("bin"))?;
        let write_f64 = |f: &mut std::fs::File, v: f64| -> Result<()> {
            f.write_all(&v.to_le_bytes())?;
            Ok(())
        };
        for t in &self.items {
            for &v in t.obs.iter().chain(&t.a_base).chain(&t.a_res).chain(&t.a_executed) {
                write_f64(&mut f, v)?;
            }
            write_f64(&mut f, t.reward)?;
            for &v in &t.next_obs {
                write_f64(&mut f, v)?;
            }
            write_f64(&mut f, if t.done { 1.0 } else { 0.0 })?;
            write_f64(&mut f, t.episode_id as f64)?;
        }
        Ok(())
    }

    pub fn restore(stem: &Path) -> Result<Self> {
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let capacity = manifest["capacity"].as_u64().ok_or_else(|| {
            Error::Config("replay manifest missing capacity".into())
        })? as usize;
        let len = manifest["len"].as_u64().unwrap_or(0) as usize;
        let od = manifest["obs_dim"].as_u64().unwrap_or(0) as usize;
        let ad = manifest["act_dim"].as_u64().unwrap_or(0) as usize;
        let mut buf = ReplayBuffer::new(capacity)?;
        let mut f = std::fs::File::open(stem.with_extension("bin"))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        let record = od + 3 * ad + 1 + od + 2;
        if bytes.len() != len * record * 8 {
            return Err(Error::Config("replay payload size does not match manifest".into()));
        }
        let mut vals = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| vals.next().unwrap()).collect() };
        for _ in 0..len {
            let obs = take(od);
            let a_base = take(ad);
            let a_res = take(ad);
            let a_executed = take(ad);
            let reward = take(1)[0];
            let next_obs = take(od);
            let done = take(1)[0] != 0.0;
            let episode_id = take(1)[0] as u64;
            buf.push(Transition { obs, a_base, a_res, a_executed, reward, next_obs, done, episode_id });
        }
        Ok(buf)
    }
}

/// Collect `strategy.budget` environment steps of warmup data into the
/// buffer. Every stored residual satisfies
/// clip(a_base + lambda * a_res) == a_executed so later critic training sees
/// consistent provenance regardless of how the behavior action was produced.
pub fn collect_warmup(
    env: &mut dyn Env,
    base: &BasePolicy,
    strategy: &WarmupStrategy,
    lambda: f64,
    buffer: &mut ReplayBuffer,
    env_rng: &mut Rng,
    policy_rng: &mut Rng,
    mut episode_id: u64,
) -> Result<u64> {
    if strategy.budget == 0 {
        return Ok(episode_id);
    }
    let ad = env.action_dim();
    let mut obs = env.reset(env_rng);
    let mut episode_bias: Vec<f64> = vec![0.0; ad];
    let mut anchor_episode = false;
    let mut new_episode = true;
    for _ in 0..strategy.budget {
        if new_episode {
            match &strategy.kind {
                WarmupKind::TcNoise { sigma, .. } => {
                    episode_bias = (0..ad).map(|_| policy_rng.normal() * sigma).collect();
                }
                WarmupKind::TcNoiseAnchor { sigma, .. } => {
                    anchor_episode = !anchor_episode;
                    episode_bias = if anchor_episode {
                        vec![0.0; ad]
                    } else {
                        (0..ad).map(|_| policy_rng.normal() * sigma).collect()
                    };
                }
                _ => {}
            }
            new_episode = false;
        }
        let a_base = base.base_action(&obs);
        let a_executed: Vec<f64> = match &strategy.kind {
            WarmupKind::BaseOnly => a_base.clone(),
            WarmupKind::FullAction => {
                (0..ad).map(|_| policy_rng.uniform_in(-1.0, 1.0)).collect()
            }
            WarmupKind::GaussianNoise { sigma } => a_base
                .iter()
                .map(|b| (b + policy_rng.normal() * sigma).clamp(-1.0, 1.0))
                .collect(),
            WarmupKind::EpsilonGreedy { epsilon } => {
                if policy_rng.uniform() < *epsilon {
                    (0..ad).map(|_| policy_rng.uniform_in(-1.0, 1.0)).collect()
                } else {
                    a_base.clone()
                }
            }
            WarmupKind::TcNoise { sigma_jitter, .. }
            | WarmupKind::TcNoiseAnchor { sigma_jitter, .. } => {
                if matches!(strategy.kind, WarmupKind::TcNoiseAnchor { .. }) && anchor_episode {
                    a_base.clone()
                } else {
                    a_base
                        .iter()
                        .zip(&episode_bias)
                        .map(|(b, eb)| {
                            (b + eb + policy_rng.normal() * sigma_jitter).clamp(-1.0, 1.0)
                        })
                        .collect()
                }
            }
        };
        // Store the residual that reproduces the executed action exactly.
        let a_res: Vec<f64> = a_executed
            .iter()
            .zip(&a_base)
            .map(|(e, b)| (e - b) / lambda)
            .collect();
        debug_assert!(combine(&a_base, &a_res, lambda)
            .unwrap()
            .iter()
            .zip(&a_executed)
            .all(|(c, e)| (c - e).abs() < 1e-9));
        let step = env.step(&a_executed)?;
        buffer.push(Transition {
            obs: obs.clone(),
            a_base,
            a_res,
            a_executed,
            reward: step.reward,
            next_obs: step.next_obs.clone(),
            done: step.done,
            episode_id,
        });
        if step.done {
            episode_id += 1;
            obs = env.reset(env_rng);
            new_episode = true;
        } else {
            obs = step.next_obs;
        }
    }
    Ok(episode_id + 1)
}
