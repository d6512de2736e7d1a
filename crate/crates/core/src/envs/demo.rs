use std::path::Path;

use super::config::{EnvConfig, EnvKind};
use super::env::{Environment, GoalObservation};
use super::episode::{run_episode, Episode, Policy};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::sim::GRASP_JAW_THRESHOLD;

/// Height above the table at which the Pick controller lines up over the object (m).
pub const HOVER_HEIGHT: f64 = 0.01;
/// Steps the Pick controller holds the jaw closed before transporting.
pub const CLOSE_HOLD_STEPS: usize = 2;
const ARRIVAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PickStage {
    Align,
    Descend,
    Close(usize),
    Transport,
}

/// Hand-written controller that solves both environments from observations.
///
/// Reach moves straight at the goal with `clip((g - p) / eta)`. Pick lines up
/// over the object at hover height, descends with the jaw open, closes and
/// holds, then carries the object to the goal.
#[derive(Debug, Clone)]
pub struct ScriptedController {
    kind: EnvKind,
    range: f64,
    eta: f64,
    /// Normalized hover height.
    hover_z: f64,
    stage: PickStage,
}

impl ScriptedController {
    pub fn new(config: &EnvConfig) -> Self {
        let ws = &config.workspace;
        let hover = (ws.table_height + HOVER_HEIGHT).min(ws.center.z + ws.range);
        Self {
            kind: config.kind,
            range: ws.range,
            eta: ws.eta,
            hover_z: (hover - ws.center.z) / ws.range,
            stage: PickStage::Align,
        }
    }

    /// Unit-clipped move from `from` toward `to`, both normalized.
    fn toward(&self, from: &[f64], to: &[f64]) -> [f64; 3] {
        let gain = self.range / self.eta;
        [0, 1, 2].map(|i| ((to[i] - from[i]) * gain).clamp(-1.0, 1.0))
    }

    fn reach_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.range
            * a.iter()
                .zip(b)
                .take(3)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
    }

    fn pick_action(&mut self, s: &[f64]) -> Vec<f64> {
        let (p, jaw, o, g) = (&s[0..3], (s[3] + 1.0) / 2.0, &s[4..7], &s[7..10]);
        let holding = jaw < GRASP_JAW_THRESHOLD && self.reach_distance(p, o) <= ARRIVAL_TOL;
        if self.stage == PickStage::Transport && !holding {
            self.stage = PickStage::Align;
        }
        loop {
            match self.stage {
                PickStage::Align => {
                    let target = [o[0], o[1], self.hover_z.max(o[2])];
                    let xy = self.reach_distance(&[p[0], p[1], 0.0], &[o[0], o[1], 0.0]);
                    if xy <= ARRIVAL_TOL {
                        self.stage = PickStage::Descend;
                        continue;
                    }
                    let d = self.toward(p, &target);
                    return vec![d[0], d[1], d[2], 1.0];
                }
                PickStage::Descend => {
                    if self.reach_distance(p, o) <= ARRIVAL_TOL {
                        self.stage = PickStage::Close(0);
                        continue;
                    }
                    let d = self.toward(p, o);
                    return vec![d[0], d[1], d[2], 1.0];
                }
                PickStage::Close(n) if n < CLOSE_HOLD_STEPS => {
                    self.stage = PickStage::Close(n + 1);
                    return vec![0.0, 0.0, 0.0, -1.0];
                }
                PickStage::Close(_) => {
                    self.stage = PickStage::Transport;
                }
                PickStage::Transport => {
                    let d = self.toward(o, g);
                    return vec![d[0], d[1], d[2], -1.0];
                }
            }
        }
    }
}

impl Policy for ScriptedController {
    fn act(&mut self, observation: &GoalObservation) -> Vec<f64> {
        let s = &observation.state;
        match self.kind {
            EnvKind::Reach => self.toward(&s[0..3], &s[3..6]).to_vec(),
            EnvKind::Pick => self.pick_action(s),
        }
    }

    fn begin_episode(&mut self) {
        self.stage = PickStage::Align;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    pub episode: Episode,
    /// False when the final reward is not 0; such episodes are not kept as demos.
    pub success: bool,
}

/// Resets `env` and runs the scripted controller for one episode.
pub fn scripted_demo(env: &mut Environment) -> Result<DemoOutcome> {
    let mut controller = ScriptedController::new(env.config());
    let episode = run_episode(env, &mut controller)?;
    let success = episode.is_success();
    Ok(DemoOutcome { episode, success })
}

/// One demonstration: the `(state, action)` pairs plus the state after the
/// last action, so the final reward can be re-derived.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoEpisode {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

impl From<&Episode> for DemoEpisode {
    fn from(ep: &Episode) -> Self {
        let t = ep.actions.len();
        Self {
            states: ep.observations[..t].to_vec(),
            actions: ep.actions.clone(),
            final_state: ep.observations[t].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub env: EnvConfig,
    pub episodes: Vec<DemoEpisode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DemoStats {
    pub attempts: usize,
    pub rejected: usize,
}

const DEMO_MAGIC: &[u8] = b"DVRL-DEMO";
const DEMO_VERSION: u32 = 1;

impl DemoSet {
    pub fn num_pairs(&self) -> usize {
        self.episodes.iter().map(|e| e.actions.len()).sum()
    }

    /// Final reward of every episode recomputed from its final state.
    pub fn final_rewards(&self) -> Vec<f64> {
        let kind = self.env.kind;
        let (a, g) = (kind.achieved_offset(), kind.goal_offset());
        self.episodes
            .iter()
            .map(|e| {
                let s = &e.final_state;
                super::compute_reward(
                    &[s[a], s[a + 1], s[a + 2]],
                    &[s[g], s[g + 1], s[g + 2]],
                    self.env.threshold,
                    self.env.workspace.range,
                )
            })
            .collect()
    }

    /// Binary layout (little endian): magic `DVRL-DEMO`, u32 version,
    /// u32-length-prefixed env config text, u32 observation dim, u32 action
    /// dim, u32 episode count; per episode a u32 length followed by that many
    /// `(state, action)` f64 rows and one final state; then a u64 FNV-1a
    /// checksum of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(DEMO_MAGIC);
        w.u32(DEMO_VERSION);
        w.text(&self.env.to_toml());
        w.u32(self.env.observation_dim() as u32);
        w.u32(self.env.action_dim() as u32);
        w.u32(self.episodes.len() as u32);
        for ep in &self.episodes {
            w.u32(ep.actions.len() as u32);
            for (s, a) in ep.states.iter().zip(&ep.actions) {
                w.f64s(s);
                w.f64s(a);
            }
            w.f64s(&ep.final_state);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, DEMO_MAGIC, "demo file")?;
        let version = r.u32()?;
        if version != DEMO_VERSION {
            return Err(Error::Integrity(format!(
                "unsupported demo version {version}"
            )));
        }
        let env = EnvConfig::from_toml(&r.text()?)?;
        let obs_dim = r.u32()? as usize;
        let act_dim = r.u32()? as usize;
        if obs_dim != env.observation_dim() || act_dim != env.action_dim() {
            return Err(Error::Integrity(
                "demo dimensions disagree with env config".into(),
            ));
        }
        let n = r.u32()? as usize;
        let mut episodes = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let mut states = Vec::with_capacity(len);
            let mut actions = Vec::with_capacity(len);
            for _ in 0..len {
                states.push(r.f64s(obs_dim)?);
                actions.push(r.f64s(act_dim)?);
            }
            let final_state = r.f64s(obs_dim)?;
            episodes.push(DemoEpisode {
                states,
                actions,
                final_state,
            });
        }
        r.finish()?;
        Ok(Self { env, episodes })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Runs the scripted controller until `count` successful episodes are
/// collected; failures are discarded and resampled.
pub fn generate_demos(config: &EnvConfig, count: usize) -> Result<(DemoSet, DemoStats)> {
    if count == 0 {
        return Err(Error::Config("demo count must be at least 1".into()));
    }
    let mut env = Environment::make(config.clone())?;
    let mut stats = DemoStats::default();
    let mut episodes = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(100);
    while episodes.len() < count {
        if stats.attempts >= max_attempts {
            return Err(Error::Config(format!(
                "scripted controller succeeded only {} times in {} attempts",
                episodes.len(),
                stats.attempts
            )));
        }
        stats.attempts += 1;
        let outcome = scripted_demo(&mut env)?;
        if outcome.success {
            episodes.push(DemoEpisode::from(&outcome.episode));
        } else {
            stats.rejected += 1;
        }
    }
    Ok((
        DemoSet {
            env: config.clone(),
            episodes,
        },
        stats,
    ))
}
