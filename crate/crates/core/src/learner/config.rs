use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DDPG + HER + behavioral cloning settings.
///
/// `seed` drives every random choice of a training run: network
/// initialization, environment seeds, exploration, and replay sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub gamma: f64,
    /// Target-network coefficient: `target ← polyak·target + (1 − polyak)·online`.
    pub polyak: f64,
    pub batch_size: usize,
    /// HER ratio: relabeled transitions outnumber original ones `k` to 1.
    pub her_k: usize,
    pub random_eps: f64,
    pub noise_sigma: f64,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub updates_per_cycle: usize,
    /// Parallel environments rolled out once per cycle.
    pub n_envs: usize,
    pub rollouts_per_env: usize,
    pub bc_weight: f64,
    pub demo_batch_size: usize,
    pub q_filter: bool,
    /// Coefficient of the mean squared pre-tanh action penalty added to the policy loss.
    pub action_l2: f64,
    pub hidden_sizes: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Replay capacity in episodes.
    pub buffer_episodes: usize,
    pub eval_episodes: usize,
    /// Stop early once an evaluation reaches this success rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_at_success: Option<f64>,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            polyak: 0.95,
            batch_size: 256,
            her_k: 4,
            random_eps: 0.3,
            noise_sigma: 0.2,
            epochs: 50,
            cycles_per_epoch: 50,
            updates_per_cycle: 40,
            n_envs: 6,
            rollouts_per_env: 1,
            bc_weight: 1.0,
            demo_batch_size: 128,
            q_filter: false,
            action_l2: 1.0,
            hidden_sizes: vec![256, 256, 256],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            buffer_episodes: 10_000,
            eval_episodes: 50,
            stop_at_success: None,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("polyak", self.polyak)?;
        unit("random_eps", self.random_eps)?;
        if let Some(s) = self.stop_at_success {
            unit("stop_at_success", s)?;
        }
        if self.gamma >= 1.0 {
            return Err(Error::Config(
                "gamma must be below 1 for bounded targets".into(),
            ));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("bc_weight", self.bc_weight),
            ("action_l2", self.action_l2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("cycles_per_epoch", self.cycles_per_epoch),
            ("n_envs", self.n_envs),
            ("rollouts_per_env", self.rollouts_per_env),
            ("buffer_episodes", self.buffer_episodes),
            ("eval_episodes", self.eval_episodes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Whether demonstrations contribute to the actor loss.
    pub fn uses_demos(&self) -> bool {
        self.bc_weight > 0.0 && self.demo_batch_size > 0
    }
}
