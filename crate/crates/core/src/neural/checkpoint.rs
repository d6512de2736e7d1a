use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Layer, Mlp, OutputActivation};
use crate::codec::{Reader, Writer};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8] = b"DVRL-CKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Actor and critic networks with their target copies, tagged with the
/// environment they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub env: EnvConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
}

fn write_sizes(w: &mut Writer, sizes: &[usize]) {
    w.u32(sizes.len() as u32);
    for &s in sizes {
        w.u32(s as u32);
    }
}

fn read_sizes(r: &mut Reader) -> Result<Vec<usize>> {
    let n = r.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Integrity(format!("implausible layer count {n}")));
    }
    let sizes = (0..n)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    if sizes.iter().any(|&s| s == 0 || s > 1 << 16) {
        return Err(Error::Integrity(format!(
            "implausible layer sizes {sizes:?}"
        )));
    }
    Ok(sizes)
}

fn write_net(w: &mut Writer, net: &Mlp) {
    for layer in &net.layers {
        w.f64s(layer.weight.iter());
        w.f64s(layer.bias.iter());
    }
}

fn read_net(r: &mut Reader, sizes: &[usize], output: OutputActivation) -> Result<Mlp> {
    let layers = sizes
        .windows(2)
        .map(|io| {
            let weight = Array2::from_shape_vec((io[0], io[1]), r.f64s(io[0] * io[1])?)
                .expect("shape matches length");
            let bias = Array1::from(r.f64s(io[1])?);
            Ok(Layer { weight, bias })
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Mlp { layers, output };
    if !net.is_finite() {
        return Err(Error::Integrity(
            "checkpoint contains non-finite weights".into(),
        ));
    }
    Ok(net)
}

impl Checkpoint {
    /// Checks that the networks fit the environment and each other.
    pub fn validate(&self) -> Result<()> {
        let obs = self.env.observation_dim();
        let act = self.env.action_dim();
        if self.actor.input_dim() != obs {
            return Err(Error::dim("actor input", obs, self.actor.input_dim()));
        }
        if self.actor.output_dim() != act {
            return Err(Error::dim("actor output", act, self.actor.output_dim()));
        }
        if self.critic.input_dim() != obs + act {
            return Err(Error::dim(
                "critic input",
                obs + act,
                self.critic.input_dim(),
            ));
        }
        if self.critic.output_dim() != 1 {
            return Err(Error::dim("critic output", 1, self.critic.output_dim()));
        }
        if !self.target_actor.same_shape(&self.actor)
            || !self.target_critic.same_shape(&self.critic)
        {
            return Err(Error::Integrity("target networks differ in shape".into()));
        }
        Ok(())
    }

    /// Binary layout (little endian): magic `DVRL-CKPT`, u32 version,
    /// u32-length-prefixed env config text, actor layer sizes and critic
    /// layer sizes (each a u32 count followed by u32 sizes), then the f64
    /// parameters of actor, critic, target actor and target critic. Each
    /// network stores, per layer, its `(inputs, outputs)` weight matrix in
    /// row-major order followed by its bias. A u64 FNV-1a checksum of all
    /// preceding bytes closes the file.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.text(&self.env.to_toml());
        write_sizes(&mut w, &self.actor.layer_sizes());
        write_sizes(&mut w, &self.critic.layer_sizes());
        for net in [
            &self.actor,
            &self.critic,
            &self.target_actor,
            &self.target_critic,
        ] {
            write_net(&mut w, net);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, CHECKPOINT_MAGIC, "checkpoint")?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Integrity(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let env = EnvConfig::from_toml(&r.text()?)?;
        let actor_sizes = read_sizes(&mut r)?;
        let critic_sizes = read_sizes(&mut r)?;
        let actor = read_net(&mut r, &actor_sizes, OutputActivation::Tanh)?;
        let critic = read_net(&mut r, &critic_sizes, OutputActivation::Identity)?;
        let target_actor = read_net(&mut r, &actor_sizes, OutputActivation::Tanh)?;
        let target_critic = read_net(&mut r, &critic_sizes, OutputActivation::Identity)?;
        r.finish()?;
        let ckpt = Self {
            env,
            actor,
            critic,
            target_actor,
            target_critic,
        };
        ckpt.validate()
            .map_err(|e| Error::Integrity(e.to_string()))?;
        Ok(ckpt)
    }

    /// Writes through a temporary file so an interrupted save never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
