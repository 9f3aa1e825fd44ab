//! Frozen scripted base controllers with calibrated imperfection.
//!
//! The controllers steer toward the *biased* goal estimate present in the
//! observation, so their competence is bounded by the env's bias range. Bias
//! ranges are calibrated once (see the calibration tests) so each env's base
//! success rate lands in the 40-70% band.

use crate::envs;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Proportional control toward the observed goal estimate.
    ProportionalBiased,
    /// Two-phase: head to an offset waypoint while far, then proportional.
    Waypoint,
}

/// A frozen controller. Pure function of the observation: no learning, no
/// internal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePolicy {
    pub kind: ControllerKind,
    pub gain: f64,
    env_id: String,
}

impl BasePolicy {
    pub fn new(kind: ControllerKind, gain: f64, env_id: &str) -> Result<Self> {
        if !envs::env_ids().contains(&env_id) {
            return Err(Error::Config(format!("unknown env id: {env_id}")));
        }
        Ok(BasePolicy { kind, gain, env_id: env_id.to_string() })
    }

    /// Default controller for an env.
    pub fn for_env(env_id: &str) -> Result<Self> {
        Self::new(ControllerKind::ProportionalBiased, 4.0, env_id)
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    /// Deterministic action toward the (biased) goal estimate, clipped to
    /// [-1, 1] per component.
    pub fn base_action(&self, obs: &[f64]) -> Vec<f64> {
        let err = self.goal_error(obs);
        let raw: Vec<f64> = match self.kind {
            ControllerKind::ProportionalBiased => err.iter().map(|e| self.gain * e).collect(),
            ControllerKind::Waypoint => {
                let d = err.iter().map(|e| e * e).sum::<f64>().sqrt();
                if d > 0.2 && err.len() == 2 {
                    // detour via a waypoint offset above the estimate
                    vec![self.gain * err[0], self.gain * (err[1] + 0.15)]
                } else {
                    err.iter().map(|e| self.gain * e).collect()
                }
            }
        };
        raw.into_iter().map(|a| a.clamp(-1.0, 1.0)).collect()
    }

    /// Goal-estimate error vector extracted from the env-specific observation
    /// layout (the components this controller treats as its target).
    fn goal_error(&self, obs: &[f64]) -> Vec<f64> {
        match self.env_id.as_str() {
            envs::REACH_ND => obs.to_vec(),
            // [pos01, vel23, est45]
            _ => vec![obs[4] - obs[0], obs[5] - obs[1]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvOverrides;
    use crate::envs::make_env;
    use crate::rng::{Rng, Stream};

    fn success_rate(env_id: &str, episodes: usize, seed: u64) -> f64 {
        let base = BasePolicy::for_env(env_id).unwrap();
        let mut env = make_env(env_id, &EnvOverrides::default()).unwrap();
        let mut rng = Rng::seed_from(seed, Stream::Env);
        let mut ok = 0;
        for _ in 0..episodes {
            let mut obs = env.reset(&mut rng);
            loop {
                let a = base.base_action(&obs);
                let r = env.step(&a).unwrap();
                if r.done {
                    if r.success {
                        ok += 1;
                    }
                    break;
                }
                obs = r.next_obs;
            }
        }
        ok as f64 / episodes as f64
    }

    #[test]
    fn base_controller_is_mediocre_on_every_env() {
        for id in ["point-insert-2d", "reach-nd", "drift-push"] {
            let rate = success_rate(id, 300, 23);
            assert!(
                (0.4..=0.7).contains(&rate),
                "{id}: base success {rate} outside the 40-70% band"
            );
        }
    }

    #[test]
    fn actions_are_deterministic_and_clipped() {
        let base = BasePolicy::for_env("point-insert-2d").unwrap();
        let obs = vec![0.9, -0.9, 0.0, 0.0, -0.5, 0.5];
        let a1 = base.base_action(&obs);
        let a2 = base.base_action(&obs);
        assert_eq!(a1, a2);
        assert!(a1.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        // gain 4 on an error of -1.4 saturates the clip
        assert_eq!(a1[0], -1.0);
    }

    #[test]
    fn unknown_env_is_rejected() {
        assert!(BasePolicy::for_env("nonexistent").is_err());
    }

    #[test]
    fn waypoint_controller_detours_while_far() {
        let bp = BasePolicy::new(ControllerKind::Waypoint, 4.0, "point-insert-2d").unwrap();
        let pb = BasePolicy::new(ControllerKind::ProportionalBiased, 4.0, "point-insert-2d").unwrap();
        // far from the estimate: the waypoint controller pushes up extra
        let far = vec![0.0, 0.0, 0.0, 0.0, 0.5, 0.0];
        assert!(bp.base_action(&far)[1] > pb.base_action(&far)[1]);
        // close: both coincide
        let near = vec![0.45, 0.0, 0.0, 0.0, 0.5, 0.0];
        assert_eq!(bp.base_action(&near), pb.base_action(&near));
    }
}
