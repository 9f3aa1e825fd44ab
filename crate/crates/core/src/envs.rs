//! Deterministic, seedable sparse-reward toy environments.
//!
//! All three tasks share the shifted sparse reward convention r in {-1, 0}:
//! reward 0 exactly on the success step, -1 otherwise. Observations are kept
//! near unit scale by construction. Each env bakes a per-episode goal-estimate
//! bias into the observation (a fixed center plus bounded jitter), so a
//! proportional controller tracking the estimate is systematically imperfect
//! and a small constant residual correction is sufficient to fix it.

use crate::config::EnvOverrides;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    /// Shifted sparse reward in {-1, 0}.
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

pub trait Env: Send {
    fn id(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn episode_len(&self) -> usize;
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    /// True goal position (hidden from the observation); used by oracle
    /// controllers and tests only.
    fn true_goal(&self) -> Vec<f64>;
    /// Scripted optimal action toward the true goal; 100% success rate.
    fn oracle_action(&self, obs: &[f64]) -> Vec<f64>;
}

pub const POINT_INSERT_2D: &str = "point-insert-2d";
pub const REACH_ND: &str = "reach-nd";
pub const DRIFT_PUSH: &str = "drift-push";

pub fn env_ids() -> &'static [&'static str] {
    &[POINT_INSERT_2D, REACH_ND, DRIFT_PUSH]
}

/// Env registry addressed by string id.
pub fn make_env(id: &str, overrides: &EnvOverrides) -> Result<Box<dyn Env>> {
    match id {
        POINT_INSERT_2D => Ok(Box::new(PointInsert2d::new(overrides))),
        REACH_ND => Ok(Box::new(ReachNd::new(overrides))),
        DRIFT_PUSH => Ok(Box::new(DriftPush::new(overrides))),
        other => Err(Error::Config(format!("unknown env id: {other}"))),
    }
}

fn clip_action(action: &[f64], dim: usize) -> Result<Vec<f64>> {
    if action.len() != dim {
        return Err(Error::Usage(format!(
            "action dim mismatch: expected {dim}, got {}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("NaN action passed to env".into()));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// point-insert-2d: precision-critical flagship. 6-dim obs (end-effector xy,
// velocity xy, noisy slot estimate xy), 2-dim action, 200 steps, tolerance
// 0.01, success additionally requires approaching the slot rather than
// drifting through it sideways.
// ---------------------------------------------------------------------------

pub struct PointInsert2d {
    pos: [f64; 2],
    vel: [f64; 2],
    slot_true: [f64; 2],
    slot_est: [f64; 2],
    step_idx: usize,
    tolerance: f64,
    jitter: f64,
    episode_len: usize,
}

/// Fixed component of the slot-estimate bias; the learnable imperfection.
pub const PI2D_BIAS_CENTER: [f64; 2] = [0.008, -0.0055];
/// Per-episode bias jitter half-range (uniform per axis).
pub const PI2D_JITTER: f64 = 0.004;
pub const PI2D_MAX_STEP: f64 = 0.05;
const PI2D_APPROACH_COS_MIN: f64 = 0.0;

impl PointInsert2d {
    pub fn new(o: &EnvOverrides) -> Self {
        PointInsert2d {
            pos: [0.0; 2],
            vel: [0.0; 2],
            slot_true: [0.0; 2],
            slot_est: [0.0; 2],
            step_idx: 0,
            tolerance: o.tolerance.unwrap_or(0.01),
            jitter: o.goal_jitter.unwrap_or(PI2D_JITTER),
            episode_len: o.episode_len.unwrap_or(200),
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.slot_est[0], self.slot_est[1]]
    }
}

impl Env for PointInsert2d {
    fn id(&self) -> &'static str {
        POINT_INSERT_2D
    }

    fn obs_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_len(&self) -> usize {
        self.episode_len
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.slot_true = [rng.uniform_in(-0.5, 0.5), rng.uniform_in(-0.5, 0.5)];
        loop {
            self.pos = [rng.uniform_in(-0.9, 0.9), rng.uniform_in(-0.9, 0.9)];
            if dist(&self.pos, &self.slot_true) >= 0.3 {
                break;
            }
        }
        let bias = [
            PI2D_BIAS_CENTER[0] + rng.uniform_in(-self.jitter, self.jitter),
            PI2D_BIAS_CENTER[1] + rng.uniform_in(-self.jitter, self.jitter),
        ];
        self.slot_est = [self.slot_true[0] + bias[0], self.slot_true[1] + bias[1]];
        self.vel = [0.0; 2];
        self.step_idx = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = clip_action(action, 2)?;
        let prev = self.pos;
        self.pos[0] += PI2D_MAX_STEP * a[0];
        self.pos[1] += PI2D_MAX_STEP * a[1];
        self.vel = [a[0], a[1]];
        self.step_idx += 1;

        let move_vec = [self.pos[0] - prev[0], self.pos[1] - prev[1]];
        let to_slot = [self.slot_true[0] - prev[0], self.slot_true[1] - prev[1]];
        let mn = (move_vec[0] * move_vec[0] + move_vec[1] * move_vec[1]).sqrt();
        let tn = (to_slot[0] * to_slot[0] + to_slot[1] * to_slot[1]).sqrt();
        let approach_ok = mn > 1e-12
            && tn > 1e-12
            && (move_vec[0] * to_slot[0] + move_vec[1] * to_slot[1]) / (mn * tn) >= PI2D_APPROACH_COS_MIN;
        let success = dist(&self.pos, &self.slot_true) <= self.tolerance && approach_ok;
        let done = success || self.step_idx >= self.episode_len;
        Ok(StepResult {
            next_obs: self.obs(),
            reward: if success { 0.0 } else { -1.0 },
            done,
            success,
        })
    }

    fn true_goal(&self) -> Vec<f64> {
        self.slot_true.to_vec()
    }

    fn oracle_action(&self, obs: &[f64]) -> Vec<f64> {
        let k = 8.0;
        vec![
            (k * (self.slot_true[0] - obs[0])).clamp(-1.0, 1.0),
            (k * (self.slot_true[1] - obs[1])).clamp(-1.0, 1.0),
        ]
    }
}

// ---------------------------------------------------------------------------
// reach-nd: easy 7-dim goal reaching. Observation is the biased goal estimate
// relative to the current position.
// ---------------------------------------------------------------------------

pub const REACH_DIM: usize = 7;
pub const REACH_BIAS_CENTER: [f64; REACH_DIM] = [0.018, -0.018, 0.017, 0.019, -0.018, 0.018, -0.018];
pub const REACH_JITTER: f64 = 0.010;

pub struct ReachNd {
    pos: [f64; REACH_DIM],
    goal_true: [f64; REACH_DIM],
    goal_est: [f64; REACH_DIM],
    step_idx: usize,
    tolerance: f64,
    jitter: f64,
    episode_len: usize,
}

impl ReachNd {
    pub fn new(o: &EnvOverrides) -> Self {
        ReachNd {
            pos: [0.0; REACH_DIM],
            goal_true: [0.0; REACH_DIM],
            goal_est: [0.0; REACH_DIM],
            step_idx: 0,
            tolerance: o.tolerance.unwrap_or(0.05),
            jitter: o.goal_jitter.unwrap_or(REACH_JITTER),
            episode_len: o.episode_len.unwrap_or(100),
        }
    }

    fn obs(&self) -> Vec<f64> {
        (0..REACH_DIM).map(|i| self.goal_est[i] - self.pos[i]).collect()
    }
}

impl Env for ReachNd {
    fn id(&self) -> &'static str {
        REACH_ND
    }

    fn obs_dim(&self) -> usize {
        REACH_DIM
    }

    fn action_dim(&self) -> usize {
        REACH_DIM
    }

    fn episode_len(&self) -> usize {
        self.episode_len
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        for i in 0..REACH_DIM {
            self.goal_true[i] = rng.uniform_in(-0.5, 0.5);
            self.pos[i] = rng.uniform_in(-0.8, 0.8);
            self.goal_est[i] =
                self.goal_true[i] + REACH_BIAS_CENTER[i] + rng.uniform_in(-self.jitter, self.jitter);
        }
        self.step_idx = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = clip_action(action, REACH_DIM)?;
        for i in 0..REACH_DIM {
            self.pos[i] += 0.05 * a[i];
        }
        self.step_idx += 1;
        let success = dist(&self.pos, &self.goal_true) <= self.tolerance;
        let done = success || self.step_idx >= self.episode_len;
        Ok(StepResult {
            next_obs: self.obs(),
            reward: if success { 0.0 } else { -1.0 },
            done,
            success,
        })
    }

    fn true_goal(&self) -> Vec<f64> {
        self.goal_true.to_vec()
    }

    fn oracle_action(&self, _obs: &[f64]) -> Vec<f64> {
        (0..REACH_DIM)
            .map(|i| (8.0 * (self.goal_true[i] - self.pos[i])).clamp(-1.0, 1.0))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// drift-push: 2-dim pushing with a per-episode friction scalar randomizing the
// effective step size (dynamics-shift analogue).
// ---------------------------------------------------------------------------

pub const PUSH_BIAS_CENTER: [f64; 2] = [0.016, -0.013];
pub const PUSH_JITTER: f64 = 0.006;

pub struct DriftPush {
    pos: [f64; 2],
    vel: [f64; 2],
    goal_true: [f64; 2],
    goal_est: [f64; 2],
    friction: f64,
    step_idx: usize,
    tolerance: f64,
    jitter: f64,
    episode_len: usize,
}

impl DriftPush {
    pub fn new(o: &EnvOverrides) -> Self {
        DriftPush {
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal_true: [0.0; 2],
            goal_est: [0.0; 2],
            friction: 1.0,
            step_idx: 0,
            tolerance: o.tolerance.unwrap_or(0.02),
            jitter: o.goal_jitter.unwrap_or(PUSH_JITTER),
            episode_len: o.episode_len.unwrap_or(200),
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.goal_est[0], self.goal_est[1]]
    }
}

impl Env for DriftPush {
    fn id(&self) -> &'static str {
        DRIFT_PUSH
    }

    fn obs_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_len(&self) -> usize {
        self.episode_len
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.goal_true = [rng.uniform_in(-0.5, 0.5), rng.uniform_in(-0.5, 0.5)];
        loop {
            self.pos = [rng.uniform_in(-0.9, 0.9), rng.uniform_in(-0.9, 0.9)];
            if dist(&self.pos, &self.goal_true) >= 0.3 {
                break;
            }
        }
        self.friction = rng.uniform_in(0.4, 1.0);
        let bias = [
            PUSH_BIAS_CENTER[0] + rng.uniform_in(-self.jitter, self.jitter),
            PUSH_BIAS_CENTER[1] + rng.uniform_in(-self.jitter, self.jitter),
        ];
        self.goal_est = [self.goal_true[0] + bias[0], self.goal_true[1] + bias[1]];
        self.vel = [0.0; 2];
        self.step_idx = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = clip_action(action, 2)?;
        self.pos[0] += 0.05 * self.friction * a[0];
        self.pos[1] += 0.05 * self.friction * a[1];
        self.vel = [self.friction * a[0], self.friction * a[1]];
        self.step_idx += 1;
        let success = dist(&self.pos, &self.goal_true) <= self.tolerance;
        let done = success || self.step_idx >= self.episode_len;
        Ok(StepResult {
            next_obs: self.obs(),
            reward: if success { 0.0 } else { -1.0 },
            done,
            success,
        })
    }

    fn true_goal(&self) -> Vec<f64> {
        self.goal_true.to_vec()
    }

    fn oracle_action(&self, obs: &[f64]) -> Vec<f64> {
        vec![
            (8.0 * (self.goal_true[0] - obs[0])).clamp(-1.0, 1.0),
            (8.0 * (self.goal_true[1] - obs[1])).clamp(-1.0, 1.0),
        ]
    }
}
