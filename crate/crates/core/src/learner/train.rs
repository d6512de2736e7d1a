use std::fs::OpenOptions;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::ReplayBuffer;
use super::config::TrainerConfig;
use super::ddpg::{
    actor_update, critic_update, ActorSettings, Agent, DemoBatch, ExplorationPolicy, GreedyPolicy,
};
use crate::envs::{run_episode, DemoSet, EnvConfig, Environment, Policy};
use crate::error::{Error, Result};
use crate::neural::Checkpoint;
use crate::rollout::{csv_error, spawn, VecEnv};

pub const METRICS_FILE: &str = "metrics.csv";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
const METRICS_HEADER: [&str; 6] = [
    "epoch",
    "success_rate",
    "critic_loss",
    "actor_loss",
    "bc_loss",
    "wall_seconds",
];

const STREAM_INIT: u64 = 1;
const STREAM_ENVS: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_REPLAY: u64 = 4;
const STREAM_DEMO: u64 = 5;
const STREAM_EXPLORE: u64 = 1 << 63;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for sub-stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
}

/// Runs `policy` without exploration for `n_episodes` episodes of
/// `max_steps` steps (the config horizon when `None`); an episode succeeds
/// when its final reward is 0.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &EnvConfig,
    n_episodes: usize,
    max_steps: Option<usize>,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Config(
            "evaluation needs at least one episode".into(),
        ));
    }
    let config = env.clone().with_horizon(max_steps.unwrap_or(env.horizon));
    let mut env = Environment::make(config)?;
    let mut successes = 0;
    for _ in 0..n_episodes {
        successes += usize::from(run_episode(&mut env, policy)?.is_success());
    }
    Ok(EvalReport {
        episodes: n_episodes,
        successes,
        success_rate: successes as f64 / n_episodes as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub success_rate: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Absent when demonstrations are not in use.
    pub bc_loss: Option<f64>,
    pub wall_seconds: f64,
}

impl EpochMetrics {
    fn record(&self) -> [String; 6] {
        [
            self.epoch.to_string(),
            self.success_rate.to_string(),
            self.critic_loss.to_string(),
            self.actor_loss.to_string(),
            self.bc_loss.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.3}", self.wall_seconds),
        ]
    }
}

/// Appends one row, writing the header first when the file is new.
pub fn append_metrics(path: impl AsRef<Path>, row: &EpochMetrics) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if fresh {
        w.write_record(METRICS_HEADER).map_err(csv_error)?;
    }
    w.write_record(row.record()).map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let malformed = |line: u64, reason: String| Error::Malformed {
        what: "metrics file",
        line: line as usize,
        reason,
    };
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?;
    if headers.iter().ne(METRICS_HEADER) {
        return Err(malformed(1, format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| malformed(line, format!("{}: {e}", METRICS_HEADER[i])))
        };
        let epoch = record[0]
            .parse::<usize>()
            .map_err(|e| malformed(line, format!("epoch: {e}")))?;
        let success_rate = num(1)?;
        if !(0.0..=1.0).contains(&success_rate) {
            return Err(malformed(
                line,
                format!("success rate {success_rate} outside [0, 1]"),
            ));
        }
        rows.push(EpochMetrics {
            epoch,
            success_rate,
            critic_loss: num(2)?,
            actor_loss: num(3)?,
            bc_loss: if record[4].is_empty() {
                None
            } else {
                Some(num(4)?)
            },
            wall_seconds: num(5)?,
        });
    }
    Ok(rows)
}

/// Demonstration `(state, action)` pairs flattened for sampling.
#[derive(Debug, Clone)]
struct DemoPool {
    states: Array2<f64>,
    actions: Array2<f64>,
}

impl DemoPool {
    fn new(set: &DemoSet, env: &EnvConfig) -> Result<Self> {
        if set.env.kind != env.kind {
            return Err(Error::Config(format!(
                "demonstrations are for {}, training {}",
                set.env.kind, env.kind
            )));
        }
        let (od, ad) = (env.observation_dim(), env.action_dim());
        let n = set.num_pairs();
        if n == 0 {
            return Err(Error::Empty("demonstration set"));
        }
        let mut states = Array2::zeros((n, od));
        let mut actions = Array2::zeros((n, ad));
        let pairs = set
            .episodes
            .iter()
            .flat_map(|e| e.states.iter().zip(&e.actions));
        for (i, (s, a)) in pairs.enumerate() {
            states.row_mut(i).assign(&ndarray::aview1(s));
            actions.row_mut(i).assign(&ndarray::aview1(a));
        }
        Ok(Self { states, actions })
    }
}

/// Owns the networks, replay, and environments of one training run.
pub struct Trainer {
    env: EnvConfig,
    cfg: TrainerConfig,
    agent: Agent,
    buffer: ReplayBuffer,
    demos: Option<DemoPool>,
    venv: VecEnv,
    eval_env: EnvConfig,
    replay_rng: ChaCha8Rng,
    demo_rng: ChaCha8Rng,
    run_seed: u64,
    completed_epochs: usize,
    rounds: u64,
}

impl Trainer {
    pub fn new(env: &EnvConfig, cfg: &TrainerConfig, demos: Option<&DemoSet>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_INIT));
        let agent = Agent::new(
            env.observation_dim(),
            env.action_dim(),
            &cfg.hidden_sizes,
            cfg.actor_lr,
            cfg.critic_lr,
            &mut rng,
        );
        Self::with_agent(env, cfg, demos, agent, 0)
    }

    /// Continues from `ckpt` after `completed_epochs` epochs. Replay and
    /// optimizer moments start empty, and the random streams are reseeded
    /// from the seed and the epoch count.
    pub fn resume(
        env: &EnvConfig,
        cfg: &TrainerConfig,
        demos: Option<&DemoSet>,
        ckpt: &Checkpoint,
        completed_epochs: usize,
    ) -> Result<Self> {
        ckpt.validate()?;
        if ckpt.env.kind != env.kind {
            return Err(Error::Config(format!(
                "checkpoint is for {}, training {}",
                ckpt.env.kind, env.kind
            )));
        }
        let agent = Agent::from_checkpoint(ckpt, cfg.actor_lr, cfg.critic_lr);
        Self::with_agent(env, cfg, demos, agent, completed_epochs)
    }

    fn with_agent(
        env: &EnvConfig,
        cfg: &TrainerConfig,
        demos: Option<&DemoSet>,
        agent: Agent,
        completed_epochs: usize,
    ) -> Result<Self> {
        env.validate()?;
        cfg.validate()?;
        let demos = match demos {
            Some(set) if cfg.uses_demos() => Some(DemoPool::new(set, env)?),
            _ => None,
        };
        let seed = cfg.seed.wrapping_add(completed_epochs as u64);
        Ok(Self {
            buffer: ReplayBuffer::new(env, cfg.buffer_episodes)?,
            venv: spawn(cfg.n_envs, env, derive_seed(seed, STREAM_ENVS))?,
            eval_env: env.clone().with_seed(derive_seed(cfg.seed, STREAM_EVAL)),
            replay_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_REPLAY)),
            demo_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_DEMO)),
            env: env.clone(),
            cfg: cfg.clone(),
            agent,
            demos,
            run_seed: seed,
            completed_epochs,
            rounds: 0,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn completed_epochs(&self) -> usize {
        self.completed_epochs
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.agent.to_checkpoint(&self.env)
    }

    /// Deterministic policy over a snapshot of the current actor.
    pub fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy {
            actor: Arc::new(self.agent.actor.clone()),
        }
    }

    pub fn evaluate(&self, n_episodes: usize, max_steps: Option<usize>) -> Result<EvalReport> {
        evaluate(
            &mut self.greedy_policy(),
            &self.eval_env,
            n_episodes,
            max_steps,
        )
    }

    /// Rollout cycles with replay updates, then an evaluation.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let start = Instant::now();
        let cfg = &self.cfg;
        let settings = ActorSettings {
            bc_weight: cfg.bc_weight,
            action_l2: cfg.action_l2,
            q_filter: cfg.q_filter,
        };
        let (mut critic_sum, mut actor_sum, mut bc_sum, mut updates) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..cfg.cycles_per_epoch {
            let snapshot = Arc::new(self.agent.actor.clone());
            let round_seed = derive_seed(self.run_seed, STREAM_EXPLORE | self.rounds);
            self.rounds += 1;
            let (eps, sigma) = (cfg.random_eps, cfg.noise_sigma);
            let factory = |instance: usize| -> Box<dyn Policy> {
                Box::new(ExplorationPolicy {
                    actor: Arc::clone(&snapshot),
                    random_eps: eps,
                    noise_sigma: sigma,
                    rng: ChaCha8Rng::seed_from_u64(derive_seed(round_seed, instance as u64)),
                })
            };
            let (episodes, _) = self.venv.rollout_parallel(&factory, cfg.rollouts_per_env)?;
            for ep in &episodes {
                self.buffer.store_episode(ep)?;
            }
            for _ in 0..cfg.updates_per_cycle {
                let batch = self.buffer.sample_her_batch(
                    cfg.batch_size,
                    cfg.her_k,
                    &mut self.replay_rng,
                )?;
                critic_sum += critic_update(&mut self.agent, &batch, cfg.gamma)?;
                let demo_sample = self.demos.as_ref().map(|pool| {
                    let idx: Vec<usize> = (0..cfg.demo_batch_size)
                        .map(|_| self.demo_rng.gen_range(0..pool.states.nrows()))
                        .collect();
                    (
                        pool.states.select(Axis(0), &idx),
                        pool.actions.select(Axis(0), &idx),
                    )
                });
                let demo_batch = demo_sample.as_ref().map(|(s, a)| DemoBatch {
                    states: s.view(),
                    actions: a.view(),
                });
                let losses =
                    actor_update(&mut self.agent, batch.states.view(), demo_batch, settings)?;
                actor_sum += losses.policy;
                bc_sum += losses.bc;
                updates += 1;
            }
            self.agent.update_targets(cfg.polyak)?;
        }
        let report = self.evaluate(self.cfg.eval_episodes, None)?;
        self.completed_epochs += 1;
        let mean = |sum: f64| {
            if updates == 0 {
                0.0
            } else {
                sum / updates as f64
            }
        };
        Ok(EpochMetrics {
            epoch: self.completed_epochs,
            success_rate: report.success_rate,
            critic_loss: mean(critic_sum),
            actor_loss: mean(actor_sum),
            bc_loss: self.demos.as_ref().map(|_| mean(bc_sum)),
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    /// Every epoch of the run, including those completed before a resume.
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_success: f64,
    pub latest: Checkpoint,
    pub best: Checkpoint,
}

/// Trains until `cfg.epochs` epochs are complete or `cfg.stop_at_success` is
/// reached. With `out_dir`, every epoch appends to `metrics.csv` and rewrites
/// `latest.ckpt`; `best.ckpt` follows the highest success rate (ties go to
/// the later epoch).
pub fn train(
    env: &EnvConfig,
    cfg: &TrainerConfig,
    demos: Option<&DemoSet>,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainSummary> {
    let trainer = Trainer::new(env, cfg, demos)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let metrics = dir.join(METRICS_FILE);
        if metrics.exists() {
            std::fs::remove_file(metrics)?;
        }
    }
    run(trainer, cfg, Vec::new(), None, out_dir, on_epoch)
}

/// Continues the run stored in `dir` (its metrics file and latest checkpoint).
pub fn resume(
    dir: &Path,
    cfg: &TrainerConfig,
    demos: Option<&DemoSet>,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainSummary> {
    let history = read_metrics(dir.join(METRICS_FILE))?;
    let latest = Checkpoint::load(dir.join(LATEST_CHECKPOINT))?;
    let best = match Checkpoint::load(dir.join(BEST_CHECKPOINT)) {
        Ok(b) => b,
        Err(_) => latest.clone(),
    };
    let trainer = Trainer::resume(&latest.env, cfg, demos, &latest, history.len())?;
    run(trainer, cfg, history, Some(best), Some(dir), on_epoch)
}

fn run(
    mut trainer: Trainer,
    cfg: &TrainerConfig,
    mut metrics: Vec<EpochMetrics>,
    best: Option<Checkpoint>,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainSummary> {
    let (mut best_epoch, mut best_success) =
        metrics.iter().fold((0, f64::NEG_INFINITY), |(e, s), m| {
            if m.success_rate >= s {
                (m.epoch, m.success_rate)
            } else {
                (e, s)
            }
        });
    let mut best = best.unwrap_or_else(|| trainer.checkpoint());
    let reached = |m: &[EpochMetrics]| {
        cfg.stop_at_success
            .zip(m.last())
            .is_some_and(|(target, last)| last.success_rate >= target)
    };
    while trainer.completed_epochs() < cfg.epochs && !reached(&metrics) {
        let row = trainer.run_epoch()?;
        let ckpt = trainer.checkpoint();
        if row.success_rate >= best_success {
            best_success = row.success_rate;
            best_epoch = row.epoch;
            best = ckpt.clone();
            if let Some(dir) = out_dir {
                best.save(dir.join(BEST_CHECKPOINT))?;
            }
        }
        if let Some(dir) = out_dir {
            append_metrics(dir.join(METRICS_FILE), &row)?;
            ckpt.save(dir.join(LATEST_CHECKPOINT))?;
        }
        on_epoch(&row);
        metrics.push(row);
    }
    Ok(TrainSummary {
        metrics,
        best_epoch,
        best_success: best_success.max(0.0),
        latest: trainer.checkpoint(),
        best,
    })
}
