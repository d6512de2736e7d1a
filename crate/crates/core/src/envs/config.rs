use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Reach,
    Pick,
}

impl EnvKind {
    pub fn observation_dim(self) -> usize {
        match self {
            EnvKind::Reach => 6,
            EnvKind::Pick => 10,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::Reach => 3,
            EnvKind::Pick => 4,
        }
    }

    /// Offset of the achieved goal inside the observation vector.
    pub fn achieved_offset(self) -> usize {
        match self {
            EnvKind::Reach => 0,
            EnvKind::Pick => 4,
        }
    }

    /// Offset of the desired goal inside the observation vector (always last).
    pub fn goal_offset(self) -> usize {
        self.observation_dim() - 3
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reach" => Ok(EnvKind::Reach),
            "pick" => Ok(EnvKind::Pick),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvKind::Reach => "reach",
            EnvKind::Pick => "pick",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSampling {
    /// Uniform over the workspace box.
    #[default]
    Uniform,
    /// The goal coincides with the starting achieved goal.
    AtStart,
}

/// Default workspace center (m, arm base frame). Reachable by both shipped
/// tools with mid-range insertion.
pub const DEFAULT_CENTER: [f64; 3] = [0.0, 0.0, -0.12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub workspace: Workspace,
    /// Success distance (m).
    pub threshold: f64,
    /// Steps per episode; there is no early termination.
    pub horizon: usize,
    pub seed: u64,
    /// Proximity-sensor radius for grasping (m). Unused by Reach.
    #[serde(default = "default_grasp_radius")]
    pub grasp_radius: f64,
    #[serde(default)]
    pub goal_sampling: GoalSampling,
}

fn default_grasp_radius() -> f64 {
    0.005
}

impl EnvConfig {
    pub fn reach() -> Self {
        Self::for_kind(EnvKind::Reach)
    }

    pub fn pick() -> Self {
        Self::for_kind(EnvKind::Pick)
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        let range = match kind {
            EnvKind::Reach => 0.05,
            EnvKind::Pick => 0.025,
        };
        Self {
            kind,
            workspace: Workspace::with_range(Vector3::from(DEFAULT_CENTER), range, 0.001),
            threshold: 0.003,
            horizon: 100,
            seed: 0,
            grasp_radius: default_grasp_radius(),
            goal_sampling: GoalSampling::Uniform,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.workspace.validate()?;
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.grasp_radius.is_finite() && self.grasp_radius > 0.0) {
            return Err(Error::Config("grasp radius must be > 0".into()));
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        self.kind.observation_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.kind.action_dim()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("env config serializes")
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let r = EnvConfig::reach();
        assert_eq!(r.workspace.range, 0.05);
        assert_eq!(r.threshold, 0.003);
        assert_eq!(r.horizon, 100);
        assert_eq!(r.workspace.eta, 0.001);
        assert_eq!(EnvConfig::pick().workspace.range, 0.025);
        r.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_strictness() {
        let cfg = EnvConfig::pick().with_seed(9);
        assert_eq!(EnvConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let bad = format!("{}\nbogus = 1\n", cfg.to_toml());
        assert!(EnvConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = EnvConfig::reach();
        c.threshold = 0.0;
        assert!(c.validate().is_err());
        let c = EnvConfig::reach().with_horizon(0);
        assert!(c.validate().is_err());
        let mut c = EnvConfig::reach();
        c.workspace.range = -0.1;
        assert!(c.validate().is_err());
    }
}
