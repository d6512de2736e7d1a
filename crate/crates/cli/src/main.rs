mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dvrl::envs::EnvKind;

#[derive(Debug, Parser)]
#[command(
    name = "dvrl",
    version,
    about = "Kinematic PSM simulator and DDPG+HER training suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record successful scripted-controller episodes as a demonstration file.
    DemoGen(DemoGenArgs),
    /// Train a policy with DDPG + HER, optionally with behavioral cloning.
    Train(TrainArgs),
    /// Evaluate a checkpoint without exploration noise.
    Eval(EvalArgs),
    /// Time one rollout round for several parallel instance counts.
    Bench(BenchArgs),
    /// Draw success-rate curves from one or more metrics files.
    Plot(PlotArgs),
    /// Forward and inverse kinematics queries.
    #[command(subcommand)]
    Tools(ToolsCommand),
}

#[derive(Debug, Args)]
struct DemoGenArgs {
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Demonstration file; enables behavioral cloning.
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Output directory for metrics, checkpoints and the resolved config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Stop once an evaluation reaches this success rate.
    #[arg(long)]
    stop_at: Option<f64>,
    /// Continue the run stored in the output directory.
    #[arg(long)]
    resume: bool,
    /// Also write success.svg into the output directory.
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    /// Episode length; defaults to the horizon stored in the checkpoint.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Expected environment; rejected if the checkpoint was trained on another.
    #[arg(long)]
    env: Option<EnvKind>,
    /// Result record path (default: eval.toml next to the checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchPolicy {
    /// Freshly initialized actor network, as used during training rollouts.
    Network,
    /// Hand-written controller.
    Scripted,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value = "reach")]
    env: EnvKind,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,6,8")]
    n: Vec<usize>,
    /// Episodes per instance in one round.
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    /// Timed rounds per instance count; the median is reported.
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, value_enum, default_value_t = BenchPolicy::Network)]
    policy: BenchPolicy,
    #[arg(long, value_delimiter = ',', default_value = "256,256,256")]
    hidden: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Metrics files, one series each.
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    /// Series labels in file order (default: parent directory names).
    #[arg(long)]
    label: Vec<String>,
    #[arg(long, default_value = "Success rate")]
    title: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ToolsCommand {
    /// Tool tip position and direction for a joint vector.
    Fk {
        #[arg(long)]
        tool: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        q: Vec<f64>,
        /// Reject joint values outside the tool's limits.
        #[arg(long)]
        check_limits: bool,
    },
    /// Joint vector for a tool tip pose `px,py,pz,vx,vy,vz`.
    Ik {
        #[arg(long)]
        tool: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        pose: Vec<f64>,
        /// Starting joints for the numeric solver (default: mid-range).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        init: Option<Vec<f64>>,
        /// Use the numeric solver even for the suction tool.
        #[arg(long)]
        numeric: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::DemoGen(a) => commands::demo_gen(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Plot(a) => commands::plot(a),
        Command::Tools(t) => commands::tools(t),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
