//! Run configuration: defaults, validation, file loading and dotted-key
//! overrides.
//!
//! Config files come in two interchangeable formats: JSON mirroring
//! [`RunConfig`], or flat `key = value` lines with dotted sections
//! (`shap.mode = cme`). Overrides use the same dotted keys. Unknown keys are
//! rejected by name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Algorithm arm: the two attribution variants plus the two ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// RSA2C with off-manifold (interventional) imputation.
    Kme,
    /// RSA2C with on-manifold (observational) imputation.
    Cme,
    /// Advanced AC: the full architecture with attribution gating disabled.
    Off,
    /// Traditional RKHS actor-critic: no attribution gating and no
    /// advantage critic; raw TD residuals drive the actor.
    RkhsAc,
}

impl Arm {
    pub fn uses_shap(self) -> bool {
        matches!(self, Arm::Kme | Arm::Cme)
    }

    pub fn uses_advantage_critic(self) -> bool {
        !matches!(self, Arm::RkhsAc)
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kme" => Ok(Arm::Kme),
            "cme" => Ok(Arm::Cme),
            "off" => Ok(Arm::Off),
            "rkhs-ac" => Ok(Arm::RkhsAc),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected kme|cme|off|rkhs-ac)"
            ))),
        }
    }
}

/// Environment selection plus per-environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvConfig {
    Pendulum {
        horizon: usize,
    },
    Lqr {
        horizon: usize,
        state_bound: f64,
        init_std: f64,
    },
}

impl EnvConfig {
    pub fn env_name(&self) -> &'static str {
        match self {
            EnvConfig::Pendulum { .. } => "pendulum",
            EnvConfig::Lqr { .. } => "lqr",
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvConfig::Pendulum { .. } => 3,
            EnvConfig::Lqr { .. } => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        1
    }
}

/// Two-timescale stepsize schedules `base * (t+1)^{-exponent}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsizeConfig {
    pub actor_base: f64,
    pub critic_base: f64,
    /// Actor exponent `sigma`; the slow timescale.
    pub actor_exp: f64,
    /// Critic exponent `nu`; the fast timescale, `nu < sigma`.
    pub critic_exp: f64,
    /// Enforce `0 < nu < sigma <= 1` at validation time.
    pub enforce_two_timescale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// RBF variance `l^2`.
    pub variance: f64,
    /// Scale of the operator output covariance `Sigma_K = sigma_k I`.
    pub sigma_k: f64,
}

/// Linear covariance annealing `Sigma = s I` from `initial` to `final`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictConfig {
    pub max_actor: usize,
    pub max_value: usize,
    /// Residual threshold; absent means the automatic median rule.
    pub eta: Option<f64>,
}

/// Regression targets for the advantage critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageTargets {
    /// Return-to-restart minus baseline. Under the restart kernel the
    /// undiscounted reward sum until the reset event is an unbiased sample
    /// of the discounted value, so these targets carry the full-scale
    /// action signal even while the value critic is still converging.
    McRestart,
    /// One-step TD residuals `r + gamma V(s') - V(s)`.
    Td,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    /// Value-critic ridge.
    pub lambda: f64,
    /// Advantage-critic ridge.
    pub lambda_adv: f64,
    pub advantage_targets: AdvantageTargets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapConfig {
    pub mode: Arm,
    /// Positive floor of the gated Mahalanobis weights.
    pub eps0: f64,
    /// Gate ceiling; absent defaults to `1/l^2` so uniform attributions
    /// reproduce the plain RBF kernel exactly.
    pub scale: Option<f64>,
    pub lambda_cme: f64,
    /// Embedding buffer capacity.
    pub buffer: usize,
    /// Permutations for the sampled estimator when `d` exceeds the exact cap.
    pub n_perms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    /// Evaluate the optimality gap every `cadence` epochs (plus a warmup of
    /// every epoch for the first 10).
    pub cadence: usize,
    pub rollouts: usize,
    pub horizon: usize,
}

/// Full training-run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub epochs: usize,
    pub gamma: f64,
    pub seed: u64,
    pub eval_episodes: usize,
    /// Episodes collected per epoch; their concatenation forms the update
    /// mini-batch.
    pub batch_episodes: usize,
    /// Variance of the Gaussian state observation noise.
    pub noise_var: f64,
    pub alpha: StepsizeConfig,
    pub kernel: KernelConfig,
    pub sigma: CovarianceSchedule,
    pub dict: DictConfig,
    pub critic: CriticConfig,
    pub shap: ShapConfig,
    pub gap: GapConfig,
}

impl RunConfig {
    /// Pendulum defaults.
    pub fn pendulum_default() -> Self {
        Self {
            env: EnvConfig::Pendulum { horizon: 200 },
            epochs: 2000,
            gamma: 0.99,
            seed: 0,
            eval_episodes: 5,
            batch_episodes: 4,
            noise_var: 0.0,
            alpha: StepsizeConfig {
                actor_base: 1.0,
                critic_base: 0.01,
                actor_exp: 0.75,
                critic_exp: 0.5,
                enforce_two_timescale: true,
            },
            kernel: KernelConfig {
                variance: 0.8,
                sigma_k: 1.0,
            },
            sigma: CovarianceSchedule {
                initial: 0.35,
                final_: 0.25,
            },
            dict: DictConfig {
                max_actor: 384,
                max_value: 384,
                eta: None,
            },
            critic: CriticConfig {
                lambda: 1e-3,
                lambda_adv: 1e-4,
                advantage_targets: AdvantageTargets::McRestart,
            },
            shap: ShapConfig {
                mode: Arm::Kme,
                eps0: 0.01,
                scale: None,
                lambda_cme: 1e-2,
                buffer: 256,
                n_perms: 256,
            },
            gap: GapConfig {
                cadence: 10,
                rollouts: 64,
                horizon: 2000,
            },
        }
    }

    /// Discounted LQR defaults (cart-pole linearization).
    pub fn lqr_default() -> Self {
        let mut cfg = Self::pendulum_default();
        cfg.env = EnvConfig::Lqr {
            horizon: 400,
            state_bound: 5.0,
            init_std: 0.05,
        };
        cfg.epochs = 600;
        cfg.kernel.variance = 1.0;
        cfg
    }

    pub fn for_env(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(Self::pendulum_default()),
            "lqr" => Ok(Self::lqr_default()),
            other => Err(Error::Config(format!(
                "unknown environment '{other}' (expected pendulum|lqr)"
            ))),
        }
    }

    /// Gate ceiling, `1/l^2` unless configured.
    pub fn gate_scale(&self) -> f64 {
        self.shap.scale.unwrap_or(1.0 / self.kernel.variance)
    }

    /// Check all domain constraints; returns the config for chaining.
    pub fn validate(&self) -> Result<&Self> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
            Ok(())
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        if self.batch_episodes == 0 {
            return Err(Error::Config("batch_episodes must be at least 1".into()));
        }
        if self.noise_var < 0.0 {
            return Err(Error::Config("noise_var must be nonnegative".into()));
        }
        positive("kernel.variance", self.kernel.variance)?;
        positive("kernel.sigma_k", self.kernel.sigma_k)?;
        positive("sigma.initial", self.sigma.initial)?;
        positive("sigma.final", self.sigma.final_)?;
        positive("alpha.actor_base", self.alpha.actor_base)?;
        positive("alpha.critic_base", self.alpha.critic_base)?;
        for (name, exp) in [
            ("alpha.actor_exp", self.alpha.actor_exp),
            ("alpha.critic_exp", self.alpha.critic_exp),
        ] {
            if !(exp > 0.0 && exp <= 1.0) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0,1] so the stepsize sum diverges, got {exp}"
                )));
            }
        }
        if self.alpha.enforce_two_timescale
            && !(self.alpha.critic_exp < self.alpha.actor_exp)
        {
            return Err(Error::Config(format!(
                "two-timescale ordering requires critic_exp < actor_exp, got {} >= {}",
                self.alpha.critic_exp, self.alpha.actor_exp
            )));
        }
        if self.dict.max_actor == 0 || self.dict.max_value == 0 {
            return Err(Error::Config("dictionary sizes must be positive".into()));
        }
        if let Some(eta) = self.dict.eta {
            if eta < 0.0 {
                return Err(Error::Config("dict.eta must be nonnegative".into()));
            }
        }
        if self.critic.lambda < 0.0 || self.critic.lambda_adv < 0.0 {
            return Err(Error::Config("ridge coefficients must be nonnegative".into()));
        }
        positive("shap.eps0", self.shap.eps0)?;
        positive("shap.lambda_cme", self.shap.lambda_cme)?;
        if self.gate_scale() < self.shap.eps0 {
            return Err(Error::Config(format!(
                "gate scale {} below eps0 {}",
                self.gate_scale(),
                self.shap.eps0
            )));
        }
        if self.shap.buffer == 0 {
            return Err(Error::Config("shap.buffer must be positive".into()));
        }
        if self.shap.n_perms == 0 {
            return Err(Error::Config("shap.n_perms must be positive".into()));
        }
        if self.gap.cadence == 0 || self.gap.rollouts == 0 || self.gap.horizon == 0 {
            return Err(Error::Config("gap parameters must be positive".into()));
        }
        match &self.env {
            EnvConfig::Pendulum { horizon } => {
                if *horizon == 0 {
                    return Err(Error::Config("env.horizon must be positive".into()));
                }
            }
            EnvConfig::Lqr {
                horizon,
                state_bound,
                init_std,
            } => {
                if *horizon == 0 {
                    return Err(Error::Config("env.horizon must be positive".into()));
                }
                positive("env.state_bound", *state_bound)?;
                positive("env.init_std", *init_std)?;
            }
        }
        Ok(self)
    }

    /// Classical Robbins-Monro check for one exponent: the stepsize sum
    /// diverges iff `exp <= 1` and the squared sum converges iff `exp > 1/2`.
    pub fn robbins_monro(exp: f64) -> (bool, bool) {
        (exp <= 1.0, exp > 0.5)
    }
}

/// Set one dotted-key override, e.g. `apply_override(&mut cfg, "shap.mode",
/// "cme")`. Unknown keys are rejected with the offending key named.
pub fn apply_override(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let mut tree = serde_json::to_value(&*cfg)?;
    let pointer = format!("/{}", key.replace('.', "/"));
    let slot = tree
        .pointer_mut(&pointer)
        .ok_or_else(|| Error::Config(format!("unknown config key: {key}")))?;
    *slot = parse_scalar(value);
    *cfg = serde_json::from_value(tree)
        .map_err(|e| Error::Config(format!("invalid value for {key}: {e}")))?;
    Ok(())
}

fn parse_scalar(value: &str) -> serde_json::Value {
    match serde_json::from_str::<serde_json::Value>(value) {
        Ok(v @ (serde_json::Value::Number(_)
        | serde_json::Value::Bool(_)
        | serde_json::Value::Null
        | serde_json::Value::String(_))) => v,
        _ => serde_json::Value::String(value.to_string()),
    }
}

/// Parse a config document: JSON if it starts with `{`, otherwise flat
/// `key = value` lines (with `#` comments). Flat files must name the
/// environment via `env.name`.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid JSON config: {e}")))?;
        cfg.validate()?;
        return Ok(cfg);
    }
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let env_name = pairs
        .iter()
        .find(|(k, _)| k == "env.name")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Config("flat config must set env.name".into()))?;
    let mut cfg = RunConfig::for_env(&env_name)?;
    for (k, v) in &pairs {
        if k == "env.name" {
            continue;
        }
        apply_override(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::pendulum_default().validate().unwrap();
        RunConfig::lqr_default().validate().unwrap();
    }

    #[test]
    fn pendulum_defaults_match_hyperparameter_table() {
        let cfg = RunConfig::pendulum_default();
        assert_eq!(cfg.epochs, 2000);
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.sigma.initial, 0.35);
        assert_eq!(cfg.sigma.final_, 0.25);
        assert_eq!(cfg.kernel.variance, 0.8);
        assert_eq!(cfg.dict.max_actor, 384);
        assert_eq!(cfg.dict.max_value, 384);
        assert_eq!(cfg.eval_episodes, 5);
        assert_eq!(cfg.alpha.actor_base, 1.0);
        assert_eq!(cfg.alpha.critic_base, 0.01);
    }

    #[test]
    fn gamma_domain_enforced() {
        let mut cfg = RunConfig::pendulum_default();
        apply_override(&mut cfg, "gamma", "1.5").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn override_nested_enum_field() {
        let mut cfg = RunConfig::pendulum_default();
        apply_override(&mut cfg, "shap.mode", "cme").unwrap();
        assert_eq!(cfg.shap.mode, Arm::Cme);
        apply_override(&mut cfg, "env.horizon", "150").unwrap();
        assert_eq!(cfg.env, EnvConfig::Pendulum { horizon: 150 });
    }

    #[test]
    fn unknown_key_named_in_error() {
        let mut cfg = RunConfig::pendulum_default();
        let err = apply_override(&mut cfg, "alpha.bogus_knob", "3").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("alpha.bogus_knob"), "{msg}");
    }

    #[test]
    fn wrong_value_type_rejected() {
        let mut cfg = RunConfig::pendulum_default();
        assert!(apply_override(&mut cfg, "epochs", "not-a-number").is_err());
    }

    #[test]
    fn two_timescale_ordering_enforced() {
        let mut cfg = RunConfig::pendulum_default();
        apply_override(&mut cfg, "alpha.critic_exp", "0.9").unwrap();
        assert!(cfg.validate().is_err());
        apply_override(&mut cfg, "alpha.enforce_two_timescale", "false").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn robbins_monro_symbolic_check() {
        // divergent sum and square-summable exactly on (1/2, 1]
        for (exp, expect) in [
            (0.4, (true, false)),
            (0.5, (true, false)),
            (0.75, (true, true)),
            (1.0, (true, true)),
            (1.1, (false, true)),
        ] {
            assert_eq!(RunConfig::robbins_monro(exp), expect);
        }
    }

    #[test]
    fn flat_and_json_configs_agree() {
        let flat = "
            # comment
            env.name = pendulum
            epochs = 50
            shap.mode = cme
            noise_var = 0.005
        ";
        let from_flat = parse_config_str(flat).unwrap();
        let mut expect = RunConfig::pendulum_default();
        expect.epochs = 50;
        expect.shap.mode = Arm::Cme;
        expect.noise_var = 0.005;
        assert_eq!(from_flat, expect);

        let json = serde_json::to_string_pretty(&expect).unwrap();
        let from_json = parse_config_str(&json).unwrap();
        assert_eq!(from_json, expect);
    }

    #[test]
    fn json_config_rejects_unknown_fields() {
        let mut v = serde_json::to_value(RunConfig::pendulum_default()).unwrap();
        v["mystery"] = serde_json::json!(1);
        let text = serde_json::to_string(&v).unwrap();
        let err = parse_config_str(&text).unwrap_err();
        assert!(format!("{err}").contains("mystery"));
    }

    #[test]
    fn gate_scale_defaults_to_inverse_variance() {
        let cfg = RunConfig::pendulum_default();
        assert_eq!(cfg.gate_scale(), 1.0 / 0.8);
        let mut cfg2 = cfg.clone();
        cfg2.shap.scale = Some(2.0);
        assert_eq!(cfg2.gate_scale(), 2.0);
    }
}
