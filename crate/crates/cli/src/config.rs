use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dvrl::envs::{EnvConfig, EnvKind};
use dvrl::learner::TrainerConfig;
use serde::{Deserialize, Serialize};
use toml::Value;

/// Contents of a run configuration file. Every section is optional; missing
/// values fall back to the defaults of the chosen environment kind.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub demos: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub env: Option<toml::Table>,
    pub trainer: Option<toml::Table>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn kind(&self) -> anyhow::Result<Option<EnvKind>> {
        match self.env.as_ref().and_then(|t| t.get("kind")) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.parse().map_err(anyhow::Error::msg)?)),
            Some(other) => bail!("env.kind must be a string, got {other}"),
        }
    }
}

/// Recursively overlays `patch` onto `base`; tables merge, other values replace.
fn overlay(base: &mut Value, patch: &toml::Table) {
    let Value::Table(base) = base else {
        return;
    };
    for (key, value) in patch {
        match (base.get_mut(key), value) {
            (Some(slot @ Value::Table(_)), Value::Table(inner)) => overlay(slot, inner),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

fn merged<T>(defaults: &T, patch: Option<&toml::Table>, section: &str) -> anyhow::Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut value = Value::try_from(defaults).context("serializing defaults")?;
    if let Some(patch) = patch {
        overlay(&mut value, patch);
    }
    value
        .try_into()
        .with_context(|| format!("invalid [{section}] section"))
}

/// Fully resolved settings of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demos: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
}

pub const RESOLVED_CONFIG: &str = "config.toml";

impl RunConfig {
    /// Defaults for `kind`, overlaid with the file, then with `seed` if given.
    /// The run seed seeds both the environment and the trainer.
    pub fn resolve(
        file: &ConfigFile,
        kind: EnvKind,
        seed: Option<u64>,
        out_dir: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        let seed = seed.or(file.seed).unwrap_or(0);
        let mut env: EnvConfig = merged(&EnvConfig::for_kind(kind), file.env.as_ref(), "env")?;
        env.kind = kind;
        env.seed = seed;
        let mut trainer: TrainerConfig =
            merged(&TrainerConfig::default(), file.trainer.as_ref(), "trainer")?;
        trainer.seed = seed;
        env.validate()?;
        trainer.validate()?;
        Ok(Self {
            seed,
            demos: file.demos.clone(),
            out_dir: out_dir
                .or_else(|| file.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from(format!("runs/{kind}"))),
            env,
            trainer,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::write(dir.join(RESOLVED_CONFIG), self.to_toml())
            .with_context(|| format!("writing resolved config to {}", dir.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let file: ConfigFile = toml::from_str(
            r#"
            seed = 4
            [env]
            horizon = 50
            [env.workspace]
            eta = 0.002
            [trainer]
            epochs = 7
            hidden_sizes = [32, 32]
            "#,
        )
        .unwrap();
        let cfg = RunConfig::resolve(&file, EnvKind::Reach, None, None).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.env.horizon, 50);
        assert_eq!(cfg.env.workspace.eta, 0.002);
        assert_eq!(cfg.env.workspace.range, 0.05);
        assert_eq!(cfg.env.threshold, 0.003);
        assert_eq!(cfg.trainer.epochs, 7);
        assert_eq!(cfg.trainer.hidden_sizes, vec![32, 32]);
        assert_eq!(cfg.trainer.seed, 4);
        let flagged = RunConfig::resolve(&file, EnvKind::Reach, Some(9), None).unwrap();
        assert_eq!((flagged.env.seed, flagged.trainer.seed), (9, 9));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ConfigFile>("sed = 1").is_err());
        let file: ConfigFile = toml::from_str("[trainer]\nepochz = 3").unwrap();
        assert!(RunConfig::resolve(&file, EnvKind::Reach, None, None).is_err());
        let file: ConfigFile = toml::from_str("[env.workspace]\nrnage = 3").unwrap();
        assert!(RunConfig::resolve(&file, EnvKind::Pick, None, None).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::resolve(&ConfigFile::default(), EnvKind::Pick, Some(2), None).unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
