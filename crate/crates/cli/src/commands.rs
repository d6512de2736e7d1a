use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use dvrl::envs::{generate_demos, DemoSet, EnvConfig, EnvKind, Policy, ScriptedController};
use dvrl::kinematics::{ik_numeric, ik_suction, DlsOptions, IkError, ToolKinematics, ToolPose};
use dvrl::learner::{self, evaluate, read_metrics, GreedyPolicy, METRICS_FILE};
use dvrl::neural::{Checkpoint, Mlp, OutputActivation};
use dvrl::rollout::{bench_sweep, format_bench_table, write_bench_csv};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigFile, RunConfig};
use crate::plot::{render_svg, Series};
use crate::{BenchArgs, BenchPolicy, DemoGenArgs, EvalArgs, PlotArgs, ToolsCommand, TrainArgs};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn usage(msg: impl Display) -> Self {
        Self {
            code: EXIT_USAGE,
            error: anyhow!("{msg}"),
        }
    }
}

/// Library errors about file contents are data errors, configuration errors
/// are usage errors, and everything else is a runtime failure.
impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error
            .chain()
            .find_map(|e| e.downcast_ref::<dvrl::Error>())
            .map(|e| match e {
                dvrl::Error::Integrity(_)
                | dvrl::Error::Malformed { .. }
                | dvrl::Error::Dimension { .. }
                | dvrl::Error::Empty(_) => EXIT_DATA,
                dvrl::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            })
            .or_else(|| {
                error
                    .chain()
                    .any(|e| e.is::<toml::de::Error>())
                    .then_some(EXIT_USAGE)
            })
            .unwrap_or(EXIT_RUNTIME);
        Self { code, error }
    }
}

impl From<dvrl::Error> for Failure {
    fn from(e: dvrl::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

trait ExitContext<T> {
    /// Marks any failure as a problem with input data.
    fn data(self, what: impl Display) -> Result<T, Failure>;
    /// Marks any failure as a usage problem.
    fn usage(self, what: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitContext<T> for Result<T, E> {
    fn data(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_DATA,
            error: e.into().context(what.to_string()),
        })
    }

    fn usage(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_USAGE,
            error: e.into().context(what.to_string()),
        })
    }
}

fn load_config_file(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    match path {
        Some(p) => ConfigFile::load(p).usage("invalid configuration"),
        None => Ok(ConfigFile::default()),
    }
}

fn resolve_kind(flag: Option<EnvKind>, file: &ConfigFile) -> Result<EnvKind, Failure> {
    let from_file = file.kind().usage("invalid configuration")?;
    flag.or(from_file)
        .ok_or_else(|| Failure::usage("choose an environment with --env or env.kind in the config"))
}

pub fn demo_gen(args: DemoGenArgs) -> CmdResult {
    if args.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let file = load_config_file(args.config.as_deref())?;
    let kind = resolve_kind(args.env, &file)?;
    let run = RunConfig::resolve(&file, kind, args.seed, None).usage("invalid configuration")?;
    let (set, stats) = generate_demos(&run.env, args.count)?;
    set.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} {} demonstrations ({} state-action pairs) to {}",
        set.episodes.len(),
        kind,
        set.num_pairs(),
        args.out.display()
    );
    println!(
        "scripted attempts: {}, rejected and resampled: {}",
        stats.attempts, stats.rejected
    );
    Ok(())
}

fn load_demos(path: &Path, kind: EnvKind) -> Result<DemoSet, Failure> {
    let set = DemoSet::load(path).data(format!("reading demonstrations {}", path.display()))?;
    if set.env.kind != kind {
        return Err(Failure {
            code: EXIT_DATA,
            error: anyhow!(
                "{} holds {} demonstrations, training {}",
                path.display(),
                set.env.kind,
                kind
            ),
        });
    }
    Ok(set)
}

fn print_epoch(m: &learner::EpochMetrics) {
    let bc = m
        .bc_loss
        .map(|v| format!(" bc_loss={v:.5}"))
        .unwrap_or_default();
    println!(
        "epoch {:>4}  success={:.3}  critic_loss={:.5}  actor_loss={:.5}{}  ({:.1}s)",
        m.epoch, m.success_rate, m.critic_loss, m.actor_loss, bc, m.wall_seconds
    );
}

pub fn train(args: TrainArgs) -> CmdResult {
    let resume_config = match (&args.resume, &args.out, &args.config) {
        (true, Some(dir), None) => Some(dir.join(crate::config::RESOLVED_CONFIG)),
        (true, None, _) => return Err(Failure::usage("--resume needs --out <run directory>")),
        _ => None,
    };
    let file = load_config_file(resume_config.as_deref().or(args.config.as_deref()))?;
    let kind = resolve_kind(args.env, &file)?;
    let mut run = RunConfig::resolve(&file, kind, args.seed, args.out.clone())
        .usage("invalid configuration")?;
    if let Some(epochs) = args.epochs {
        run.trainer.epochs = epochs;
    }
    if let Some(hidden) = args.hidden {
        run.trainer.hidden_sizes = hidden;
    }
    if args.stop_at.is_some() {
        run.trainer.stop_at_success = args.stop_at;
    }
    if args.demos.is_some() {
        run.demos = args.demos;
    }
    run.trainer.validate().usage("invalid trainer settings")?;

    let demos = match &run.demos {
        Some(path) if run.trainer.uses_demos() => Some(load_demos(path, kind)?),
        _ => None,
    };
    let dir = run.out_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    run.write(&dir)?;
    println!(
        "training {} for up to {} epochs{} -> {}",
        kind,
        run.trainer.epochs,
        if demos.is_some() {
            " with behavioral cloning"
        } else {
            ""
        },
        dir.display()
    );
    let summary = if args.resume {
        learner::resume(&dir, &run.trainer, demos.as_ref(), &mut print_epoch)
            .data(format!("resuming from {}", dir.display()))?
    } else {
        learner::train(
            &run.env,
            &run.trainer,
            demos.as_ref(),
            Some(&dir),
            &mut print_epoch,
        )?
    };
    println!(
        "best success {:.3} at epoch {}; checkpoints in {}",
        summary.best_success,
        summary.best_epoch,
        dir.display()
    );
    if args.plot {
        let metrics = dir.join(METRICS_FILE);
        let out = dir.join("success.svg");
        write_plot(
            &[metrics],
            &[kind.to_string()],
            &format!("PSM {kind}"),
            &out,
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalRecord {
    checkpoint: PathBuf,
    env: EnvKind,
    seed: u64,
    episodes: usize,
    max_steps: usize,
    successes: usize,
    success_rate: f64,
}

pub fn eval(args: EvalArgs) -> CmdResult {
    if args.episodes == 0 {
        return Err(Failure::usage("--episodes must be at least 1"));
    }
    if args.max_steps == Some(0) {
        return Err(Failure::usage("--max-steps must be at least 1"));
    }
    let ckpt = Checkpoint::load(&args.checkpoint)
        .data(format!("reading checkpoint {}", args.checkpoint.display()))?;
    if let Some(kind) = args.env {
        if kind != ckpt.env.kind {
            return Err(Failure {
                code: EXIT_DATA,
                error: anyhow!(
                    "checkpoint was trained on {} (observation dim {}), requested {} (observation dim {})",
                    ckpt.env.kind,
                    ckpt.actor.input_dim(),
                    kind,
                    kind.observation_dim()
                ),
            });
        }
    }
    let mut env = ckpt.env.clone();
    if let Some(seed) = args.seed {
        env.seed = seed;
    }
    let max_steps = args.max_steps.unwrap_or(env.horizon);
    let mut policy = GreedyPolicy {
        actor: Arc::new(ckpt.actor),
    };
    let report = evaluate(&mut policy, &env, args.episodes, Some(max_steps))?;
    println!(
        "success rate {:.3} ({}/{} episodes, {} steps each)",
        report.success_rate, report.successes, report.episodes, max_steps
    );
    let record = EvalRecord {
        checkpoint: args.checkpoint.clone(),
        env: env.kind,
        seed: env.seed,
        episodes: report.episodes,
        max_steps,
        successes: report.successes,
        success_rate: report.success_rate,
    };
    let out = args.out.unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("eval.toml")
    });
    std::fs::write(&out, toml::to_string(&record).expect("record serializes"))
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn bench(args: BenchArgs) -> CmdResult {
    if args.n.is_empty() || args.n.contains(&0) {
        return Err(Failure::usage("--n needs positive instance counts"));
    }
    if args.episodes == 0 || args.rounds == 0 {
        return Err(Failure::usage("--episodes and --rounds must be at least 1"));
    }
    if args.hidden.contains(&0) {
        return Err(Failure::usage("--hidden sizes must be positive"));
    }
    let seed = args.seed.unwrap_or(0);
    let env = EnvConfig::for_kind(args.env).with_seed(seed);
    let rows = match args.policy {
        BenchPolicy::Scripted => {
            let factory = |_: usize| -> Box<dyn Policy> { Box::new(ScriptedController::new(&env)) };
            bench_sweep(&env, &args.n, args.episodes, args.rounds, seed, &factory)?
        }
        BenchPolicy::Network => {
            let mut sizes = vec![env.observation_dim()];
            sizes.extend(&args.hidden);
            sizes.push(env.action_dim());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let actor = Arc::new(Mlp::new(&sizes, OutputActivation::Tanh, &mut rng));
            let factory = |_: usize| -> Box<dyn Policy> {
                Box::new(GreedyPolicy {
                    actor: Arc::clone(&actor),
                })
            };
            bench_sweep(&env, &args.n, args.episodes, args.rounds, seed, &factory)?
        }
    };
    write_bench_csv(&args.out, &rows).with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", format_bench_table(&rows));
    println!("wrote {}", args.out.display());
    Ok(())
}

fn write_plot(metrics: &[PathBuf], labels: &[String], title: &str, out: &Path) -> CmdResult {
    let mut series = Vec::with_capacity(metrics.len());
    for (i, path) in metrics.iter().enumerate() {
        let rows = read_metrics(path).data(format!("reading {}", path.display()))?;
        if rows.is_empty() {
            return Err(Failure {
                code: EXIT_DATA,
                error: anyhow!("{} has no epochs", path.display()),
            });
        }
        let label = labels.get(i).cloned().unwrap_or_else(|| {
            path.parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string())
        });
        series.push(Series {
            label,
            points: rows
                .iter()
                .map(|m| (m.epoch as f64, m.success_rate))
                .collect(),
        });
    }
    let svg = render_svg(title, &series).data("rendering plot")?;
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn plot(args: PlotArgs) -> CmdResult {
    if args.label.len() > args.metrics.len() {
        return Err(Failure::usage("more --label values than metrics files"));
    }
    write_plot(&args.metrics, &args.label, &args.title, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_tool(name: &str) -> Result<ToolKinematics, Failure> {
    if let Some(tool) = ToolKinematics::builtin(name) {
        return Ok(tool);
    }
    let path = Path::new(name);
    if path.exists() {
        return ToolKinematics::load(path).data(format!("reading tool file {name}"));
    }
    Err(Failure::usage(format!(
        "unknown tool {name:?}: use lnd, suction, or a tool definition file"
    )))
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.9}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn tools(cmd: ToolsCommand) -> CmdResult {
    match cmd {
        ToolsCommand::Fk {
            tool,
            q,
            check_limits,
        } => {
            let tool = load_tool(&tool)?;
            let pose = if check_limits {
                tool.forward_kinematics_checked(&q)
            } else {
                tool.forward_kinematics(&q)
            }
            .usage("forward kinematics")?;
            println!("position  {}", fmt_vec(pose.position.as_slice()));
            println!("direction {}", fmt_vec(pose.direction.as_slice()));
            Ok(())
        }
        ToolsCommand::Ik {
            tool: name,
            pose,
            init,
            numeric,
        } => {
            let tool = load_tool(&name)?;
            if pose.len() != 6 {
                return Err(Failure::usage("--pose takes px,py,pz,vx,vy,vz"));
            }
            let target = ToolPose::new(
                Vector3::new(pose[0], pose[1], pose[2]),
                Vector3::new(pose[3], pose[4], pose[5]),
            )
            .usage("invalid pose")?;
            let closed_form = tool.num_joints() == 5 && !numeric && init.is_none();
            let joints = if closed_form {
                ik_suction(&target, &tool).map_err(|e| Failure {
                    code: EXIT_RUNTIME,
                    error: e.into(),
                })?
            } else {
                let start = init.unwrap_or_else(|| tool.mid_range());
                match ik_numeric(&tool, &target, &start, &DlsOptions::default()) {
                    Ok(sol) => {
                        println!(
                            "iterations {}  residual {:.3e}",
                            sol.iterations, sol.residual
                        );
                        sol.joints
                    }
                    Err(IkError::NoConvergence(sol)) => {
                        println!("best joints {}", fmt_vec(&sol.joints));
                        return Err(Failure {
                            code: EXIT_RUNTIME,
                            error: anyhow!(
                                "no convergence after {} iterations (residual {:.3e})",
                                sol.iterations,
                                sol.residual
                            ),
                        });
                    }
                    Err(IkError::Kinematics(e)) => return Err(Failure::from(e)),
                }
            };
            println!("joints {}", fmt_vec(&joints));
            Ok(())
        }
    }
}
