//! Run configuration: one `RunConfig` fully describes an experiment run.

use crate::diffcore::HiddenNorm;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Critic output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CriticHead {
    Scalar,
    /// Categorical atoms on a fixed support. `v_min = None` derives the
    /// theoretical bound -(1 - gamma^T)/(1 - gamma) from the episode length.
    C51 { atoms: usize, v_min: Option<f64>, v_max: f64 },
    Quantile { n: usize, kappa: f64 },
    Tqc { heads: usize, n: usize, drop: usize, kappa: f64 },
}

impl CriticHead {
    pub fn c51_default() -> Self {
        CriticHead::C51 { atoms: 51, v_min: None, v_max: 0.0 }
    }

    pub fn quantile_default() -> Self {
        CriticHead::Quantile { n: 25, kappa: 1.0 }
    }

    pub fn tqc_default() -> Self {
        CriticHead::Tqc { heads: 5, n: 25, drop: 2, kappa: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    Auto,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplicitWarmupKind {
    None,
    SoftAuto,
    SoftFixed,
    Hard,
}

/// Critic-only pre-training phase between warmup collection and online RL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitWarmup {
    pub kind: ExplicitWarmupKind,
    pub steps: u64,
}

impl ExplicitWarmup {
    pub fn none() -> Self {
        ExplicitWarmup { kind: ExplicitWarmupKind::None, steps: 0 }
    }
}

/// Warmup data collection strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WarmupKind {
    BaseOnly,
    FullAction,
    GaussianNoise { sigma: f64 },
    EpsilonGreedy { epsilon: f64 },
    TcNoise { sigma: f64, sigma_jitter: f64 },
    TcNoiseAnchor { sigma: f64, sigma_jitter: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupStrategy {
    #[serde(flatten)]
    pub kind: WarmupKind,
    /// Transition budget M.
    pub budget: u64,
}

impl WarmupStrategy {
    pub fn base_only(budget: u64) -> Self {
        WarmupStrategy { kind: WarmupKind::BaseOnly, budget }
    }

    pub fn full_action(budget: u64) -> Self {
        WarmupStrategy { kind: WarmupKind::FullAction, budget }
    }

    pub fn gaussian_noise_default(budget: u64) -> Self {
        WarmupStrategy { kind: WarmupKind::GaussianNoise { sigma: 0.1 }, budget }
    }

    pub fn epsilon_greedy_default(budget: u64) -> Self {
        WarmupStrategy { kind: WarmupKind::EpsilonGreedy { epsilon: 0.2 }, budget }
    }

    pub fn tc_noise_default(budget: u64) -> Self {
        WarmupStrategy { kind: WarmupKind::TcNoise { sigma: 0.2, sigma_jitter: 0.01 }, budget }
    }

    pub fn tc_noise_anchor_default(budget: u64) -> Self {
        WarmupStrategy { kind: WarmupKind::TcNoiseAnchor { sigma: 0.2, sigma_jitter: 0.01 }, budget }
    }
}

/// Per-env parameter overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvOverrides {
    pub tolerance: Option<f64>,
    pub goal_jitter: Option<f64>,
    pub episode_len: Option<usize>,
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env_id: String,
    pub env_overrides: EnvOverrides,
    /// Residual scale bounding the correction magnitude.
    pub lambda: f64,
    pub warmup: WarmupStrategy,
    pub critic_head: CriticHead,
    pub critic_norm: HiddenNorm,
    pub actor_norm: HiddenNorm,
    pub explicit_warmup: ExplicitWarmup,
    /// Progressive exploration horizon H; residual usage probability is
    /// min(t/H, 1). `None` disables gating (residual always active).
    pub progressive_h: Option<u64>,
    pub gamma: f64,
    pub alpha_init: f64,
    pub alpha_mode: AlphaMode,
    /// `None` uses -(action dim).
    pub target_entropy: Option<f64>,
    pub lr: f64,
    pub batch: usize,
    pub env_steps_per_update: u64,
    /// Gradient updates per environment step.
    pub utd: f64,
    pub tau: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub hidden_dims: Vec<usize>,
    pub replay_capacity: usize,
    pub anchor_episodes: usize,
    pub grad_clip: f64,
}

fn default_lambda(env_id: &str) -> f64 {
    match env_id {
        "drift-push" => 0.2,
        _ => 0.1,
    }
}

impl RunConfig {
    /// Small profile sized so whole ablation suites run on a single laptop
    /// core. Differences from the paper-faithful profile: batch 64, hidden
    /// width 32, learning rate 3e-4, total budget 200K env steps.
    pub fn desk(env_id: &str) -> Self {
        RunConfig {
            env_id: env_id.to_string(),
            env_overrides: EnvOverrides::default(),
            lambda: default_lambda(env_id),
            warmup: WarmupStrategy::base_only(20_000),
            critic_head: CriticHead::Scalar,
            critic_norm: HiddenNorm::LayerNorm,
            actor_norm: HiddenNorm::None,
            explicit_warmup: ExplicitWarmup::none(),
            progressive_h: None,
            gamma: 0.97,
            alpha_init: 0.01,
            alpha_mode: AlphaMode::Auto,
            target_entropy: None,
            lr: 3e-4,
            batch: 64,
            env_steps_per_update: 64,
            utd: 1.0,
            tau: 0.01,
            total_steps: 200_000,
            seed: 0,
            eval_every: 2_000,
            eval_episodes: 10,
            hidden_dims: vec![32, 32],
            replay_capacity: 1_000_000,
            anchor_episodes: 50,
            grad_clip: 10.0,
        }
    }

    /// Faithful hyperparameters: batch 1024, lr 1e-4, two hidden layers of
    /// 256 units.
    pub fn paper(env_id: &str) -> Self {
        RunConfig {
            lr: 1e-4,
            batch: 1024,
            hidden_dims: vec![256, 256],
            total_steps: 1_000_000,
            eval_every: 10_000,
            ..Self::desk(env_id)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0,1)".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if self.utd <= 0.0 {
            return Err(Error::Config("utd must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config("tau must lie in (0,1]".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("hidden_dims must be non-empty".into()));
        }
        match &self.critic_head {
            CriticHead::C51 { atoms, v_min, v_max } => {
                if *atoms < 2 {
                    return Err(Error::Config("c51 needs at least 2 atoms".into()));
                }
                if let Some(vm) = v_min {
                    if vm >= v_max {
                        return Err(Error::Config("c51 v_min must be below v_max".into()));
                    }
                }
            }
            CriticHead::Quantile { n, kappa } => {
                if *n == 0 || *kappa <= 0.0 {
                    return Err(Error::Config("quantile head needs n >= 1 and kappa > 0".into()));
                }
            }
            CriticHead::Tqc { heads, n, drop, kappa } => {
                if *heads == 0 || *n == 0 || *kappa <= 0.0 {
                    return Err(Error::Config("tqc head needs heads, n >= 1 and kappa > 0".into()));
                }
                if drop >= n {
                    return Err(Error::Config("tqc drop count must be below n".into()));
                }
            }
            CriticHead::Scalar => {}
        }
        Ok(())
    }

    /// Resolved C51 support for an episode of length `t`.
    pub fn c51_support(&self, episode_len: usize) -> Option<(usize, f64, f64)> {
        match &self.critic_head {
            CriticHead::C51 { atoms, v_min, v_max } => {
                let vmin = v_min.unwrap_or_else(|| {
                    -(1.0 - self.gamma.powi(episode_len as i32)) / (1.0 - self.gamma)
                });
                Some((*atoms, vmin, *v_max))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_and_paper_profiles_validate() {
        for env in ["point-insert-2d", "reach-nd", "drift-push"] {
            RunConfig::desk(env).validate().unwrap();
            RunConfig::paper(env).validate().unwrap();
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.critic_head = CriticHead::tqc_default();
        cfg.warmup = WarmupStrategy::tc_noise_anchor_default(5000);
        cfg.explicit_warmup = ExplicitWarmup { kind: ExplicitWarmupKind::SoftAuto, steps: 10_000 };
        cfg.progressive_h = Some(50_000);
        cfg.env_overrides.tolerance = Some(0.02);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn derived_c51_floor_matches_discounted_sum_oracle() {
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.critic_head = CriticHead::c51_default();
        let (atoms, v_min, v_max) = cfg.c51_support(200).unwrap();
        assert_eq!(atoms, 51);
        assert_eq!(v_max, 0.0);
        // oracle: worst case is reward -1 on all 200 steps
        let worst: f64 = (0..200).map(|k| -(cfg.gamma.powi(k))).sum();
        assert!((v_min - worst).abs() < 1e-10, "{v_min} vs {worst}");
    }

    #[test]
    fn explicit_v_min_overrides_the_derived_bound() {
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.critic_head = CriticHead::C51 { atoms: 11, v_min: Some(-10.0), v_max: 0.0 };
        let (_, v_min, _) = cfg.c51_support(200).unwrap();
        assert_eq!(v_min, -10.0);
    }

    #[test]
    fn default_lambda_is_stronger_for_dynamics_shift() {
        assert_eq!(RunConfig::desk("point-insert-2d").lambda, 0.1);
        assert_eq!(RunConfig::desk("reach-nd").lambda, 0.1);
        assert_eq!(RunConfig::desk("drift-push").lambda, 0.2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.critic_head = CriticHead::Tqc { heads: 5, n: 25, drop: 25, kappa: 1.0 };
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.critic_head = CriticHead::C51 { atoms: 51, v_min: Some(0.0), v_max: 0.0 };
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::desk("point-insert-2d");
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
    }
}
