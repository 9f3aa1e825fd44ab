//! Named ablation suites. Each suite is a list of configuration variants
//! sharing a base profile, swept over a list of seeds.

use dawn_core::config::{
    CriticHead, ExplicitWarmup, ExplicitWarmupKind, RunConfig, WarmupStrategy,
};
use dawn_core::diffcore::HiddenNorm;
use dawn_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentSuite {
    pub name: String,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
}

impl ExperimentSuite {
    pub fn new(name: &str, variants: Vec<Variant>, seeds: Vec<u64>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for v in &variants {
            if !seen.insert(v.name.clone()) {
                return Err(Error::Config(format!("duplicate variant name {:?}", v.name)));
            }
        }
        if variants.is_empty() || seeds.is_empty() {
            return Err(Error::Config("suite needs at least one variant and one seed".into()));
        }
        Ok(Self { name: name.to_string(), variants, seeds })
    }
}

pub const DEFAULT_SEED_COUNT: u64 = 8;

pub fn suite_names() -> &'static [&'static str] {
    &[
        "warmup-quantity",
        "warmup-strategy",
        "explicit-warmup",
        "normalization",
        "lambda-robustness",
        "objectives",
        "dawn-vs-baselines",
        "component-ablation",
        "actor-vs-critic-norm",
    ]
}

fn base(profile: &str, env_id: &str) -> Result<RunConfig> {
    match profile {
        "desk" => Ok(RunConfig::desk(env_id)),
        "paper" => Ok(RunConfig::paper(env_id)),
        other => Err(Error::Config(format!("unknown profile {other:?}, expected desk or paper"))),
    }
}

fn variant(name: &str, cfg: RunConfig) -> Variant {
    Variant { name: name.to_string(), config: cfg }
}

/// Build one of the shipped suites on the given profile. All suites run on
/// the precision flagship env; the base controller and defaults come from
/// the profile preset.
pub fn canonical_suite(name: &str, profile: &str) -> Result<ExperimentSuite> {
    let env = "point-insert-2d";
    let seeds: Vec<u64> = (0..DEFAULT_SEED_COUNT).collect();
    let variants = match name {
        "warmup-quantity" => [0u64, 5_000, 10_000, 20_000, 40_000]
            .iter()
            .map(|&m| {
                let mut c = base(profile, env)?;
                c.warmup = WarmupStrategy::base_only(m);
                Ok(variant(&format!("m{}", m / 1000), c))
            })
            .collect::<Result<Vec<_>>>()?,
        "warmup-strategy" => {
            let budget = base(profile, env)?.warmup.budget;
            let strategies: [(&str, WarmupStrategy); 6] = [
                ("base-only", WarmupStrategy::base_only(budget)),
                ("full-action", WarmupStrategy::full_action(budget)),
                ("gaussian-noise", WarmupStrategy::gaussian_noise_default(budget)),
                ("epsilon-greedy", WarmupStrategy::epsilon_greedy_default(budget)),
                ("tc-noise", WarmupStrategy::tc_noise_default(budget)),
                ("tc-noise-anchor", WarmupStrategy::tc_noise_anchor_default(budget)),
            ];
            strategies
                .into_iter()
                .map(|(n, s)| {
                    let mut c = base(profile, env)?;
                    c.warmup = s;
                    Ok(variant(n, c))
                })
                .collect::<Result<Vec<_>>>()?
        }
        "explicit-warmup" => {
            let kinds = [
                ("none", ExplicitWarmupKind::None),
                ("soft-auto", ExplicitWarmupKind::SoftAuto),
                ("soft-fixed", ExplicitWarmupKind::SoftFixed),
                ("hard", ExplicitWarmupKind::Hard),
            ];
            kinds
                .into_iter()
                .map(|(n, k)| {
                    let mut c = base(profile, env)?;
                    let steps = if k == ExplicitWarmupKind::None { 0 } else { 10_000 };
                    c.explicit_warmup = ExplicitWarmup { kind: k, steps };
                    Ok(variant(n, c))
                })
                .collect::<Result<Vec<_>>>()?
        }
        "normalization" => [
            ("none", HiddenNorm::None),
            ("layer-norm", HiddenNorm::LayerNorm),
            ("hyperspherical", HiddenNorm::Hyperspherical),
        ]
        .into_iter()
        .map(|(n, norm)| {
            let mut c = base(profile, env)?;
            c.critic_norm = norm;
            Ok(variant(n, c))
        })
        .collect::<Result<Vec<_>>>()?,
        "lambda-robustness" => [0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|&l| {
                let mut c = base(profile, env)?;
                c.lambda = l;
                Ok(variant(&format!("lambda-{l}"), c))
            })
            .collect::<Result<Vec<_>>>()?,
        "objectives" => {
            let heads = [
                ("mse", CriticHead::Scalar),
                ("c51", CriticHead::c51_default()),
                ("qr", CriticHead::quantile_default()),
                ("tqc", CriticHead::tqc_default()),
            ];
            heads
                .into_iter()
                .map(|(n, h)| {
                    let mut c = base(profile, env)?;
                    c.critic_head = h;
                    Ok(variant(n, c))
                })
                .collect::<Result<Vec<_>>>()?
        }
        "dawn-vs-baselines" => {
            let dawn = base(profile, env)?;
            let mut vanilla = base(profile, env)?;
            vanilla.warmup = WarmupStrategy::base_only(0);
            vanilla.critic_norm = HiddenNorm::None;
            let mut progressive = vanilla.clone();
            progressive.progressive_h = Some(20_000);
            vec![
                variant("dawn", dawn),
                variant("vanilla-residual", vanilla),
                variant("progressive-exploration", progressive),
            ]
        }
        "component-ablation" => {
            let dawn = base(profile, env)?;
            let mut no_warmup = base(profile, env)?;
            no_warmup.warmup = WarmupStrategy::base_only(0);
            let mut no_norm = base(profile, env)?;
            no_norm.critic_norm = HiddenNorm::None;
            vec![
                variant("dawn", dawn),
                variant("no-warmup", no_warmup),
                variant("no-norm", no_norm),
            ]
        }
        "actor-vs-critic-norm" => {
            let placements = [
                ("none", HiddenNorm::None, HiddenNorm::None),
                ("critic-ln", HiddenNorm::LayerNorm, HiddenNorm::None),
                ("actor-ln", HiddenNorm::None, HiddenNorm::LayerNorm),
                ("both-ln", HiddenNorm::LayerNorm, HiddenNorm::LayerNorm),
                ("critic-hn", HiddenNorm::Hyperspherical, HiddenNorm::None),
            ];
            placements
                .into_iter()
                .map(|(n, critic, actor)| {
                    let mut c = base(profile, env)?;
                    c.critic_norm = critic;
                    c.actor_norm = actor;
                    Ok(variant(n, c))
                })
                .collect::<Result<Vec<_>>>()?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown suite {other:?}; shipped suites: {}",
                suite_names().join(", ")
            )))
        }
    };
    ExperimentSuite::new(name, variants, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_suite_builds_and_validates() {
        for name in suite_names() {
            let s = canonical_suite(name, "desk").unwrap();
            assert_eq!(s.seeds.len(), 8);
            for v in &s.variants {
                v.config.validate().unwrap_or_else(|e| panic!("{name}/{}: {e}", v.name));
            }
        }
    }

    #[test]
    fn suite_shapes_match_their_ablation_grids() {
        let counts = [
            ("warmup-quantity", 5),
            ("warmup-strategy", 6),
            ("explicit-warmup", 4),
            ("normalization", 3),
            ("lambda-robustness", 4),
            ("objectives", 4),
            ("dawn-vs-baselines", 3),
            ("component-ablation", 3),
            ("actor-vs-critic-norm", 5),
        ];
        for (name, n) in counts {
            assert_eq!(canonical_suite(name, "desk").unwrap().variants.len(), n, "{name}");
        }
    }

    #[test]
    fn duplicate_variant_names_are_rejected() {
        let c = RunConfig::desk("point-insert-2d");
        let vs = vec![
            Variant { name: "a".into(), config: c.clone() },
            Variant { name: "a".into(), config: c },
        ];
        assert!(ExperimentSuite::new("x", vs, vec![0]).is_err());
    }

    #[test]
    fn unknown_suite_and_profile_are_descriptive_errors() {
        assert!(canonical_suite("nope", "desk").is_err());
        assert!(canonical_suite("objectives", "gpu").is_err());
    }
}
