//! Residual soft actor-critic trainer with warmup anchoring, explicit
//! critic-only warmup variants, progressive exploration gating, and
//! per-evaluation diagnostics.

use std::path::Path;

use crate::agent::{combine, quantile_fractions, CriticEnsemble, HeadKind, ResidualPolicy};
use crate::basepolicy::BasePolicy;
use crate::buffer::{collect_warmup, ReplayBuffer, Transition};
use crate::config::{AlphaMode, ExplicitWarmupKind, RunConfig};
use crate::diagnostics::{self, AnchorSet};
use crate::diffcore::{
    clip_global_norm, forward_mlp, param_grads, save_checkpoint, AdamState, Checkpoint, NodeId,
    Tape,
};
use crate::envs::{make_env, Env};
use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};

/// Grounding error above this multiple of its first recorded value marks the
/// run as diverged.
pub const DIVERGENCE_FACTOR: f64 = 5.0;
/// Batch size used for sensitivity / value-difference probes at eval time.
const DIAG_BATCH: usize = 256;
const WARMUP_ALPHA_RECORD_EVERY: u64 = 200;

#[derive(Debug, Clone)]
pub struct MetricPoint {
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub metrics: Vec<MetricPoint>,
    pub final_success: f64,
    pub diverged: bool,
}

/// Project probability mass sitting at arbitrary positions onto a fixed
/// uniformly spaced support, splitting each mass between its two nearest
/// atoms. Total mass is conserved exactly up to float rounding.
pub fn project_categorical(probs: &[f64], positions: &[f64], support: &[f64]) -> Vec<f64> {
    assert_eq!(probs.len(), positions.len());
    let n = support.len();
    let v_min = support[0];
    let v_max = support[n - 1];
    let dz = (v_max - v_min) / (n - 1) as f64;
    let mut m = vec![0.0; n];
    for (&p, &x) in probs.iter().zip(positions) {
        if p == 0.0 {
            continue;
        }
        let xc = x.clamp(v_min, v_max);
        let b = (xc - v_min) / dz;
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            m[l] += p;
        } else {
            m[l] += p * (u as f64 - b);
            m[u] += p * (b - l as f64);
        }
    }
    m
}

/// Pool quantile estimates from every head, sort ascending, and keep the
/// lowest `heads * (n - drop)` values (truncation of the most optimistic
/// tail).
pub fn tqc_pooled_targets(per_head: &[Vec<f64>], drop_per_head: usize) -> Vec<f64> {
    let heads = per_head.len();
    let n = per_head[0].len();
    let mut pool: Vec<f64> = per_head.iter().flatten().cloned().collect();
    pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pool.truncate(heads * (n - drop_per_head));
    pool
}

/// One-parameter Adam used for the log-alpha temperature.
#[derive(Debug, Clone, Default)]
struct ScalarAdam {
    t: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    fn step(&mut self, x: &mut f64, grad: f64, lr: f64) {
        use crate::diffcore::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
        self.t += 1;
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad;
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad;
        let mh = self.m / (1.0 - ADAM_BETA1.powi(self.t as i32));
        let vh = self.v / (1.0 - ADAM_BETA2.powi(self.t as i32));
        *x -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
}

pub struct Trainer {
    pub cfg: RunConfig,
    env: Box<dyn Env>,
    pub base: BasePolicy,
    pub policy: ResidualPolicy,
    pub critics: CriticEnsemble,
    pub log_alpha: f64,
    target_entropy: f64,
    actor_opt: AdamState,
    critic_opts: Vec<AdamState>,
    alpha_opt: ScalarAdam,
    pub buffer: ReplayBuffer,
    env_rng: Rng,
    policy_rng: Rng,
    buffer_rng: Rng,
    gate_rng: Rng,
    pub anchors: AnchorSet,
    pub metrics: Vec<MetricPoint>,
    episode_id: u64,
    pub diverged: bool,
    grounding_baseline: Option<f64>,
    last_good: Option<Checkpoint>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut env = make_env(&cfg.env_id, &cfg.env_overrides)?;
        let base = BasePolicy::for_env(&cfg.env_id)?;
        let mut init_rng = Rng::seed_from(cfg.seed, Stream::Init);
        let policy = ResidualPolicy::new(
            env.obs_dim(),
            env.action_dim(),
            &cfg.hidden_dims,
            cfg.actor_norm,
            &mut init_rng,
        )?;
        let critics = CriticEnsemble::new(
            env.obs_dim(),
            env.action_dim(),
            &cfg.hidden_dims,
            cfg.critic_norm,
            &cfg.critic_head,
            cfg.gamma,
            env.episode_len(),
            &mut init_rng,
        )?;
        let actor_opt = AdamState::new(&policy.params);
        let critic_opts = critics.online.iter().map(AdamState::new).collect();
        let mut buffer = ReplayBuffer::new(cfg.replay_capacity)?;
        let mut env_rng = Rng::seed_from(cfg.seed, Stream::Env);
        let mut policy_rng = Rng::seed_from(cfg.seed, Stream::Policy);
        let buffer_rng = Rng::seed_from(cfg.seed, Stream::Buffer);
        let gate_rng = Rng::seed_from(cfg.seed, Stream::Gate);

        let episode_id = collect_warmup(
            env.as_mut(),
            &base,
            &cfg.warmup,
            cfg.lambda,
            &mut buffer,
            &mut env_rng,
            &mut policy_rng,
            0,
        )?;

        // Held-out anchor episodes roll on a separate env instance with a
        // dedicated stream so they never overlap training data.
        let mut anchor_env = make_env(&cfg.env_id, &cfg.env_overrides)?;
        let mut anchor_rng = Rng::seed_from(cfg.seed, Stream::Anchor);
        let anchors = diagnostics::collect_anchors(
            anchor_env.as_mut(),
            &base,
            cfg.gamma,
            cfg.anchor_episodes,
            &mut anchor_rng,
        )?;

        let target_entropy = cfg.target_entropy.unwrap_or(-(env.action_dim() as f64));
        Ok(Trainer {
            log_alpha: cfg.alpha_init.ln(),
            target_entropy,
            cfg,
            env,
            base,
            policy,
            critics,
            actor_opt,
            critic_opts,
            alpha_opt: ScalarAdam::default(),
            buffer,
            env_rng,
            policy_rng,
            buffer_rng,
            gate_rng,
            anchors,
            metrics: Vec::new(),
            episode_id,
            diverged: false,
            grounding_baseline: None,
            last_good: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn record(&mut self, step: u64, metric: &str, value: f64) {
        self.metrics.push(MetricPoint { step, metric: metric.to_string(), value });
    }

    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<TrainReport> {
        match self.run_inner(out_dir) {
            Ok(report) => Ok(report),
            Err(Error::Numeric(msg)) => {
                if let (Some(dir), Some(ckpt)) = (out_dir, &self.last_good) {
                    save_checkpoint(&dir.join("last_good"), ckpt)?;
                }
                Err(Error::Numeric(msg))
            }
            Err(e) => Err(e),
        }
    }

    fn run_inner(&mut self, out_dir: Option<&Path>) -> Result<TrainReport> {
        self.explicit_warmup_phase()?;
        let mut final_success = 0.0;
        let mut last_losses: Option<(f64, f64)> = None;

        let mut obs = self.env.reset(&mut self.env_rng);
        let ad = self.env.action_dim();
        let updates_per_round =
            ((self.cfg.env_steps_per_update as f64 * self.cfg.utd).round() as usize).max(1);
        for t in 0..self.cfg.total_steps {
            let a_base = self.base.base_action(&obs);
            let gate_open = match self.cfg.progressive_h {
                None => true,
                Some(h) => {
                    let eps = ((t as f64) / (h as f64)).min(1.0);
                    self.gate_rng.uniform() < eps
                }
            };
            let a_res = if gate_open {
                self.policy.sample(&obs, &mut self.policy_rng)?.0
            } else {
                vec![0.0; ad]
            };
            let a_exec = combine(&a_base, &a_res, self.cfg.lambda)?;
            let step = self.env.step(&a_exec)?;
            self.buffer.push(Transition {
                obs: obs.clone(),
                a_base,
                a_res,
                a_executed: a_exec,
                reward: step.reward,
                next_obs: step.next_obs.clone(),
                done: step.done,
                episode_id: self.episode_id,
            });
            if step.done {
                self.episode_id += 1;
                obs = self.env.reset(&mut self.env_rng);
            } else {
                obs = step.next_obs;
            }

            if (t + 1) % self.cfg.env_steps_per_update == 0 && self.buffer.len() >= self.cfg.batch
            {
                for _ in 0..updates_per_round {
                    let alpha = self.alpha();
                    let (critic_loss, _) = self.critic_update(alpha)?;
                    let (actor_loss, mean_logp) = self.actor_update()?;
                    if self.cfg.alpha_mode == AlphaMode::Auto {
                        self.alpha_step(mean_logp);
                    }
                    self.critics.ema_update(self.cfg.tau)?;
                    if t + 1 == self.cfg.env_steps_per_update {
                        // one-time visibility into the very first update round
                        self.record(t + 1, "first_critic_loss", critic_loss);
                        self.record(t + 1, "first_actor_loss", actor_loss);
                    }
                    last_losses = Some((critic_loss, actor_loss));
                }
            }

            if (t + 1) % self.cfg.eval_every == 0 {
                if let Some((cl, al)) = last_losses {
                    self.record(t + 1, "critic_loss", cl);
                    self.record(t + 1, "actor_loss", al);
                }
                final_success = self.evaluate(t + 1)?;
            }
        }

        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join("final"), &self.checkpoint(self.cfg.total_steps))?;
        }
        Ok(TrainReport {
            metrics: self.metrics.clone(),
            final_success,
            diverged: self.diverged,
        })
    }

    /// Critic-only pre-training on the warmup buffer, before any online data.
    fn explicit_warmup_phase(&mut self) -> Result<()> {
        let wu = self.cfg.explicit_warmup;
        if wu.kind == ExplicitWarmupKind::None || wu.steps == 0 {
            return Ok(());
        }
        if self.buffer.len() < self.cfg.batch {
            return Err(Error::Usage(
                "explicit warmup requires at least one batch of warmup data".into(),
            ));
        }
        for i in 0..wu.steps {
            let alpha_eff = match wu.kind {
                ExplicitWarmupKind::Hard => 0.0,
                ExplicitWarmupKind::SoftFixed => self.cfg.alpha_init,
                ExplicitWarmupKind::SoftAuto => self.alpha(),
                ExplicitWarmupKind::None => unreachable!(),
            };
            let (_, mean_next_logp) = self.critic_update(alpha_eff)?;
            if wu.kind == ExplicitWarmupKind::SoftAuto {
                self.alpha_step(mean_next_logp);
            }
            self.critics.ema_update(self.cfg.tau)?;
            if i % WARMUP_ALPHA_RECORD_EVERY == 0 || i + 1 == wu.steps {
                let a = self.alpha();
                self.record(i, "warmup_alpha", a);
            }
        }
        let (q_mean, ret_mean) = diagnostics::anchor_stats(&self.critics, &self.anchors)?;
        self.record(wu.steps, "post_warmup_anchor_q", q_mean);
        self.record(wu.steps, "post_warmup_anchor_return", ret_mean);
        Ok(())
    }

    /// One soft Bellman critic update at the given entropy temperature.
    /// Returns (summed loss over heads, mean next-action log-prob).
    fn critic_update(&mut self, alpha_eff: f64) -> Result<(f64, f64)> {
        let samples: Vec<Transition> = self
            .buffer
            .sample(self.cfg.batch, &mut self.buffer_rng)?
            .into_iter()
            .cloned()
            .collect();
        let b = samples.len();
        let od = samples[0].obs.len();
        let ad = samples[0].a_base.len();
        let gamma = self.cfg.gamma;

        // targets, no gradients
        let mut logp_sum = 0.0;
        let mut scalar_targets: Vec<f64> = Vec::new();
        let mut c51_targets: Vec<f64> = Vec::new();
        let mut quantile_targets: Vec<f64> = Vec::new();
        let mut tcols = 0usize;
        for t in &samples {
            let nb = self.base.base_action(&t.next_obs);
            let (nres, logp) = self.policy.sample(&t.next_obs, &mut self.policy_rng)?;
            logp_sum += logp;
            let na = combine(&nb, &nres, self.cfg.lambda)?;
            // bootstrap through timeouts; only success is a true terminal
            let mask = if t.reward == 0.0 { 0.0 } else { 1.0 };
            match &self.critics.kind {
                HeadKind::Scalar => {
                    let mut qmin = f64::INFINITY;
                    for h in 0..self.critics.num_heads() {
                        qmin = qmin.min(self.critics.q_value(h, true, &t.next_obs, &na)?);
                    }
                    scalar_targets.push(t.reward + gamma * mask * (qmin - alpha_eff * logp));
                }
                HeadKind::C51 { atoms } => {
                    // head with the smaller expectation provides the target
                    let mut best: Option<(f64, Vec<f64>)> = None;
                    for h in 0..self.critics.num_heads() {
                        let d = self.critics.value_dist(h, true, &t.next_obs, &na)?;
                        let e = d.expectation();
                        let probs = match d {
                            crate::agent::ValueDistribution::Categorical { probs, .. } => probs,
                            _ => unreachable!(),
                        };
                        if best.as_ref().map_or(true, |(be, _)| e < *be) {
                            best = Some((e, probs));
                        }
                    }
                    let (_, probs) = best.unwrap();
                    let positions: Vec<f64> = atoms
                        .iter()
                        .map(|&z| t.reward + gamma * mask * (z - alpha_eff * logp))
                        .collect();
                    c51_targets.extend(project_categorical(&probs, &positions, atoms));
                }
                HeadKind::Quantile { n, .. } => {
                    let mut best: Option<(f64, Vec<f64>)> = None;
                    for h in 0..self.critics.num_heads() {
                        let theta = self.critics.raw_output(h, true, &t.next_obs, &na)?;
                        let e = theta.iter().sum::<f64>() / *n as f64;
                        if best.as_ref().map_or(true, |(be, _)| e < *be) {
                            best = Some((e, theta));
                        }
                    }
                    let (_, theta) = best.unwrap();
                    tcols = *n;
                    quantile_targets.extend(
                        theta
                            .iter()
                            .map(|&z| t.reward + gamma * mask * (z - alpha_eff * logp)),
                    );
                }
                HeadKind::Tqc { drop, .. } => {
                    let mut per_head = Vec::with_capacity(self.critics.num_heads());
                    for h in 0..self.critics.num_heads() {
                        per_head.push(self.critics.raw_output(h, true, &t.next_obs, &na)?);
                    }
                    let kept = tqc_pooled_targets(&per_head, *drop);
                    tcols = kept.len();
                    quantile_targets.extend(
                        kept.iter()
                            .map(|&z| t.reward + gamma * mask * (z - alpha_eff * logp)),
                    );
                }
            }
        }
        let mean_logp = logp_sum / b as f64;

        // single tape for all heads, one backward sweep
        let mut tape = Tape::new();
        let mut input = Vec::with_capacity(b * (od + ad));
        for t in &samples {
            input.extend_from_slice(&t.obs);
            input.extend_from_slice(&t.a_executed);
        }
        let input = tape.leaf(b, od + ad, input, false);
        let mut head_ids: Vec<Vec<NodeId>> = Vec::new();
        let mut total: Option<NodeId> = None;
        for h in 0..self.critics.num_heads() {
            let ids = self.critics.online[h].bind(&mut tape, true);
            let raw = forward_mlp(&mut tape, &self.critics.spec, &ids, input)?;
            let loss = match &self.critics.kind {
                HeadKind::Scalar => tape.mse_loss(raw, scalar_targets.clone())?,
                HeadKind::C51 { .. } => tape.cross_entropy_logits(raw, c51_targets.clone())?,
                HeadKind::Quantile { n, kappa } => tape.quantile_huber(
                    raw,
                    quantile_targets.clone(),
                    tcols,
                    quantile_fractions(*n),
                    *kappa,
                )?,
                HeadKind::Tqc { n, kappa, .. } => tape.quantile_huber(
                    raw,
                    quantile_targets.clone(),
                    tcols,
                    quantile_fractions(*n),
                    *kappa,
                )?,
            };
            head_ids.push(ids);
            total = Some(match total {
                None => loss,
                Some(acc) => tape.add(acc, loss),
            });
        }
        let total = total.unwrap();
        let loss_value = tape.values(total)[0];
        if !loss_value.is_finite() {
            return Err(Error::Numeric("non-finite critic loss".into()));
        }
        let grads = tape.backward(total)?;
        for (h, ids) in head_ids.iter().enumerate() {
            let mut owned: Vec<Option<Vec<f64>>> = param_grads(&grads, ids)
                .into_iter()
                .map(|g| g.map(|s| s.to_vec()))
                .collect();
            clip_global_norm(&mut owned, self.cfg.grad_clip);
            let refs: Vec<Option<&[f64]>> = owned.iter().map(|g| g.as_deref()).collect();
            self.critic_opts[h].step(&mut self.critics.online[h], &refs, self.cfg.lr)?;
        }
        Ok((loss_value, mean_logp))
    }

    /// One policy-gradient step on E[alpha log pi - Qbar]. Returns
    /// (loss, mean log-prob of the sampled residuals).
    fn actor_update(&mut self) -> Result<(f64, f64)> {
        let samples: Vec<Transition> = self
            .buffer
            .sample(self.cfg.batch, &mut self.buffer_rng)?
            .into_iter()
            .cloned()
            .collect();
        let b = samples.len();
        let od = samples[0].obs.len();
        let ad = samples[0].a_base.len();
        let mut tape = Tape::new();
        let mut obs_flat = Vec::with_capacity(b * od);
        let mut base_flat = Vec::with_capacity(b * ad);
        for t in &samples {
            obs_flat.extend_from_slice(&t.obs);
            base_flat.extend_from_slice(&t.a_base);
        }
        let obs_leaf = tape.leaf(b, od, obs_flat, false);
        let base_leaf = tape.leaf(b, ad, base_flat, false);
        let xi = self.policy_rng.normal_vec(b * ad);
        let actor_ids = self.policy.params.bind(&mut tape, true);
        let (a_res, logp) = self.policy.sample_on_tape_with(&mut tape, &actor_ids, obs_leaf, &xi)?;
        let scaled = tape.scale(a_res, self.cfg.lambda);
        let summed = tape.add(base_leaf, scaled);
        let exec = tape.clamp(summed, -1.0, 1.0);
        let input = tape.concat(obs_leaf, exec)?;

        let qbar = match &self.critics.kind {
            HeadKind::Tqc { .. } => {
                let mut acc: Option<NodeId> = None;
                for h in 0..self.critics.num_heads() {
                    let raw = self.critics.forward_on_tape(&mut tape, h, input, false)?;
                    let e = self.critics.expectation_on_tape(&mut tape, raw)?;
                    acc = Some(match acc {
                        None => e,
                        Some(a) => tape.add(a, e),
                    });
                }
                tape.scale(acc.unwrap(), 1.0 / self.critics.num_heads() as f64)
            }
            _ => {
                let raw0 = self.critics.forward_on_tape(&mut tape, 0, input, false)?;
                let e0 = self.critics.expectation_on_tape(&mut tape, raw0)?;
                let raw1 = self.critics.forward_on_tape(&mut tape, 1, input, false)?;
                let e1 = self.critics.expectation_on_tape(&mut tape, raw1)?;
                tape.min_pair(e0, e1)
            }
        };
        let alpha = self.alpha();
        let ent = tape.scale(logp, alpha);
        let diff = tape.sub(ent, qbar);
        let loss = tape.mean_all(diff);
        let loss_value = tape.values(loss)[0];
        if !loss_value.is_finite() {
            return Err(Error::Numeric("non-finite actor loss".into()));
        }
        let mean_logp =
            tape.values(logp).iter().sum::<f64>() / b as f64;
        let grads = tape.backward(loss)?;
        let mut owned: Vec<Option<Vec<f64>>> = param_grads(&grads, &actor_ids)
            .into_iter()
            .map(|g| g.map(|s| s.to_vec()))
            .collect();
        clip_global_norm(&mut owned, self.cfg.grad_clip);
        let refs: Vec<Option<&[f64]>> = owned.iter().map(|g| g.as_deref()).collect();
        self.actor_opt.step(&mut self.policy.params, &refs, self.cfg.lr)?;
        Ok((loss_value, mean_logp))
    }

    /// Temperature update: d/d(log alpha) of E[-alpha (log pi + H_target)]
    /// is -alpha (mean log pi + H_target).
    fn alpha_step(&mut self, mean_logp: f64) {
        let grad = -self.alpha() * (mean_logp + self.target_entropy);
        let lr = self.cfg.lr;
        self.alpha_opt.step(&mut self.log_alpha, grad, lr);
    }

    /// Deterministic evaluation plus value diagnostics. Returns the success
    /// rate.
    fn evaluate(&mut self, step: u64) -> Result<f64> {
        let mut eval_env = make_env(&self.cfg.env_id, &self.cfg.env_overrides)?;
        let mut eval_rng = Rng::seed_from(self.cfg.seed.wrapping_add(step), Stream::Eval);
        let mut successes = 0usize;
        for _ in 0..self.cfg.eval_episodes {
            let mut obs = eval_env.reset(&mut eval_rng);
            loop {
                let a_base = self.base.base_action(&obs);
                let a_res = self.policy.mean_action(&obs)?;
                let a = combine(&a_base, &a_res, self.cfg.lambda)?;
                let r = eval_env.step(&a)?;
                if r.done {
                    if r.success {
                        successes += 1;
                    }
                    break;
                }
                obs = r.next_obs;
            }
        }
        let success_rate = successes as f64 / self.cfg.eval_episodes as f64;
        self.record(step, "success_rate", success_rate);

        let grounding = diagnostics::grounding_error(&self.critics, &self.anchors)?;
        self.record(step, "grounding_error", grounding);
        let baseline = *self.grounding_baseline.get_or_insert(grounding);
        if grounding > DIVERGENCE_FACTOR * baseline {
            self.diverged = true;
        }
        self.record(step, "divergence_flag", if self.diverged { 1.0 } else { 0.0 });

        // sensitivity and value-difference probes on replayed states
        let n = DIAG_BATCH.min(self.buffer.len());
        if n > 0 {
            let mut obs = Vec::with_capacity(n);
            let mut a_base = Vec::with_capacity(n);
            let mut a_res = Vec::with_capacity(n);
            for _ in 0..n {
                let t = self.buffer.get(eval_rng.index(self.buffer.len()));
                obs.push(t.obs.clone());
                a_base.push(t.a_base.clone());
                a_res.push(self.policy.mean_action(&t.obs)?);
            }
            let sens = diagnostics::critic_sensitivity(
                &self.critics,
                &obs,
                &a_base,
                &a_res,
                self.cfg.lambda,
            )?;
            self.record(step, "critic_sensitivity", sens);
            let vd = diagnostics::value_difference(
                &self.critics,
                &obs,
                &a_base,
                &a_res,
                self.cfg.lambda,
            )?;
            self.record(step, "value_difference", vd);
        }
        let a = self.alpha();
        self.record(step, "alpha", a);
        self.last_good = Some(self.checkpoint(step));
        Ok(success_rate)
    }

    /// Snapshot every parameter set plus scalar state.
    pub fn checkpoint(&self, step: u64) -> Checkpoint {
        let mut sections = vec![("actor".to_string(), self.policy.params.clone())];
        for (h, ps) in self.critics.online.iter().enumerate() {
            sections.push((format!("critic{h}"), ps.clone()));
        }
        for (h, ps) in self.critics.target.iter().enumerate() {
            sections.push((format!("target{h}"), ps.clone()));
        }
        Checkpoint {
            sections,
            scalars: vec![("log_alpha".to_string(), self.log_alpha), ("step".to_string(), step as f64)],
        }
    }

    /// Random (obs, a_base, a_res) triples from the replay buffer with the
    /// current policy's mean residual, for anatomy snapshots.
    pub fn anatomy_samples(
        &mut self,
        n: usize,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if self.buffer.is_empty() {
            return Err(Error::Usage("anatomy requires replay data".into()));
        }
        let mut obs = Vec::with_capacity(n);
        let mut a_base = Vec::with_capacity(n);
        let mut a_res = Vec::with_capacity(n);
        for _ in 0..n {
            let t = self.buffer.get(self.buffer_rng.index(self.buffer.len()));
            obs.push(t.obs.clone());
            a_base.push(t.a_base.clone());
        }
        for o in &obs {
            a_res.push(self.policy.mean_action(o)?);
        }
        Ok((obs, a_base, a_res))
    }
}
