//! Independent environment instances stepped concurrently, one worker thread
//! per instance, with wall-clock timing of each synchronized round.

use std::io::Write;
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use crate::envs::{run_episode, EnvConfig, Environment, Episode, Policy};
use crate::error::{Error, Result};

/// Builds the policy a worker runs; called once per instance per round,
/// inside that instance's worker.
pub type PolicyFactory<'a> = dyn Fn(usize) -> Box<dyn Policy> + Sync + 'a;

/// Wall time of one synchronized round over all instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub n_envs: usize,
    pub seconds_per_round: f64,
    pub episodes: usize,
    pub steps: usize,
}

impl TimingReport {
    pub fn steps_per_second(&self) -> f64 {
        self.steps as f64 / self.seconds_per_round
    }

    pub fn episodes_per_second(&self) -> f64 {
        self.episodes as f64 / self.seconds_per_round
    }
}

/// `n` environments seeded `seed_base + i`, each owned by exactly one worker
/// while a round runs.
#[derive(Debug)]
pub struct VecEnv {
    envs: Vec<Environment>,
    seeds: Vec<u64>,
    step_counts: Vec<u64>,
    timings: Vec<TimingReport>,
}

pub fn spawn(n: usize, config: &EnvConfig, seed_base: u64) -> Result<VecEnv> {
    if n == 0 {
        return Err(Error::Config(
            "need at least one environment instance".into(),
        ));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| seed_base.wrapping_add(i)).collect();
    let envs = seeds
        .iter()
        .map(|&s| Environment::make(config.clone().with_seed(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(VecEnv {
        envs,
        seeds,
        step_counts: vec![0; n],
        timings: Vec::new(),
    })
}

impl VecEnv {
    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn step_counts(&self) -> &[u64] {
        &self.step_counts
    }

    /// Every round timed so far, oldest first.
    pub fn timings(&self) -> &[TimingReport] {
        &self.timings
    }

    pub fn env(&self, instance: usize) -> &Environment {
        &self.envs[instance]
    }

    pub fn env_mut(&mut self, instance: usize) -> &mut Environment {
        &mut self.envs[instance]
    }

    /// Runs `episodes_per_instance` episodes on every instance concurrently
    /// and returns them grouped by instance (instance 0 first). Any worker
    /// failure aborts the round with that worker's instance id.
    pub fn rollout_parallel(
        &mut self,
        make_policy: &PolicyFactory,
        episodes_per_instance: usize,
    ) -> Result<(Vec<Episode>, TimingReport)> {
        let n = self.envs.len();
        let start = Instant::now();
        let mut results: Vec<Option<Result<Vec<Episode>>>> = (0..n).map(|_| None).collect();
        std::thread::scope(|scope| {
            let (tx, rx) = mpsc::channel();
            let mut handles = Vec::with_capacity(n);
            for (instance, env) in self.envs.iter_mut().enumerate() {
                let tx = tx.clone();
                handles.push(scope.spawn(move || {
                    let mut policy = make_policy(instance);
                    let episodes = (0..episodes_per_instance)
                        .map(|_| run_episode(env, policy.as_mut()))
                        .collect::<Result<Vec<_>>>();
                    // The coordinator outlives every worker, so the receiver is alive.
                    let _ = tx.send((instance, episodes));
                }));
            }
            drop(tx);
            for (instance, episodes) in rx {
                results[instance] = Some(episodes);
            }
            for (instance, handle) in handles.into_iter().enumerate() {
                if handle.join().is_err() {
                    results[instance] = Some(Err(Error::Worker {
                        instance,
                        reason: "worker panicked".into(),
                    }));
                }
            }
        });
        let seconds = start.elapsed().as_secs_f64();

        let mut all = Vec::with_capacity(n * episodes_per_instance);
        let mut steps = 0;
        for (instance, result) in results.into_iter().enumerate() {
            let episodes = match result {
                Some(Ok(eps)) => eps,
                Some(Err(Error::Worker { instance, reason })) => {
                    return Err(Error::Worker { instance, reason })
                }
                Some(Err(e)) => {
                    return Err(Error::Worker {
                        instance,
                        reason: e.to_string(),
                    })
                }
                None => {
                    return Err(Error::Worker {
                        instance,
                        reason: "worker returned no result".into(),
                    })
                }
            };
            let instance_steps: usize = episodes.iter().map(Episode::len).sum();
            self.step_counts[instance] += instance_steps as u64;
            steps += instance_steps;
            all.extend(episodes);
        }
        let report = TimingReport {
            n_envs: n,
            seconds_per_round: seconds,
            episodes: all.len(),
            steps,
        };
        self.timings.push(report);
        Ok((all, report))
    }
}

/// Times rollout rounds for every instance count in `ns`. Each row reports
/// the median of `rounds` rounds after one untimed warm-up round.
pub fn bench_sweep(
    config: &EnvConfig,
    ns: &[usize],
    episodes_per_instance: usize,
    rounds: usize,
    seed_base: u64,
    make_policy: &PolicyFactory,
) -> Result<Vec<TimingReport>> {
    if ns.is_empty() {
        return Err(Error::Empty("instance count list"));
    }
    if rounds == 0 || episodes_per_instance == 0 {
        return Err(Error::Config(
            "rounds and episodes must be at least 1".into(),
        ));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut venv = spawn(n, config, seed_base)?;
        venv.rollout_parallel(make_policy, episodes_per_instance)?;
        let mut reports = (0..rounds)
            .map(|_| {
                venv.rollout_parallel(make_policy, episodes_per_instance)
                    .map(|r| r.1)
            })
            .collect::<Result<Vec<_>>>()?;
        reports.sort_by(|a, b| a.seconds_per_round.total_cmp(&b.seconds_per_round));
        rows.push(reports[reports.len() / 2]);
    }
    Ok(rows)
}

pub fn write_bench_csv(path: impl AsRef<Path>, rows: &[TimingReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "n_envs",
        "seconds_per_round",
        "episodes",
        "steps_per_second",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.n_envs.to_string(),
            format!("{:.6}", r.seconds_per_round),
            r.episodes.to_string(),
            format!("{:.1}", r.steps_per_second()),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Renders the bench table for terminals.
pub fn format_bench_table(rows: &[TimingReport]) -> String {
    let mut out = Vec::new();
    let _ = writeln!(
        out,
        "{:>6} {:>18} {:>9} {:>16}",
        "n_envs", "seconds_per_round", "episodes", "steps_per_second"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>6} {:>18.6} {:>9} {:>16.1}",
            r.n_envs,
            r.seconds_per_round,
            r.episodes,
            r.steps_per_second()
        );
    }
    String::from_utf8(out).expect("ascii table")
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{other:?}")),
    }
}
