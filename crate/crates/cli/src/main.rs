use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use otflow::coupling::Strategy;
use otflow::schedules::Schedule;
use otflow_cli::commands::{self, AblationKind, Overrides};
use otflow_cli::{exit_code, selftest};

#[derive(Parser)]
#[command(
    name = "otflow",
    version,
    about = "One-step neural flow maps with optimal-transport couplings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Sectioned key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Euler steps for velocity-field models.
    #[arg(long)]
    nfe: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// independent | perbatch | minibatch | loom | global
    #[arg(long)]
    coupling: Option<Strategy>,
    /// linear | cosine | poly:<a> | stoch:<s>
    #[arg(long)]
    schedule: Option<Schedule>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            nfe: self.nfe,
            steps: self.steps,
            coupling: self.coupling,
            schedule: self.schedule,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, loss trace and optional samples.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate points from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1024)]
        n: usize,
    },
    /// Write per-point paths over the time grid.
    Trajectories {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// Integrate velocity-field checkpoints with Euler steps.
        #[arg(long)]
        euler: bool,
    },
    /// Multi-seed W2² comparison across tasks and methods.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Record wall-clock seconds instead of NA.
        #[arg(long)]
        wallclock: bool,
    },
    /// Sweep schedules or coupling strategies.
    Ablate {
        kind: AblationKind,
        #[command(flatten)]
        common: Common,
    },
    /// Fast internal consistency checks.
    Selftest,
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train { common, resume } => {
            let cfg = commands::effective_config(common.config.as_deref(), &common.overrides())?;
            let run = commands::cmd_train(&cfg, resume.as_deref())?;
            if run.trace.is_empty() {
                println!("no steps run; outputs in {}", cfg.out.display());
            } else {
                println!(
                    "trained {} steps, final loss {:.6}; outputs in {}",
                    run.trace.len(),
                    run.trace.tail_mean(100),
                    cfg.out.display()
                );
            }
        }
        Command::Sample {
            common,
            checkpoint,
            n,
        } => {
            let path = commands::cmd_sample(&checkpoint, n, &common.overrides())?;
            println!("wrote {}", path.display());
        }
        Command::Trajectories {
            common,
            checkpoint,
            n,
            euler,
        } => {
            let path = commands::cmd_trajectories(&checkpoint, n, euler, &common.overrides())?;
            println!("wrote {}", path.display());
        }
        Command::Benchmark { common, wallclock } => {
            let mut cfg =
                commands::effective_config(common.config.as_deref(), &common.overrides())?;
            cfg.bench.wallclock |= wallclock;
            if let Some(s) = common.seed {
                cfg.bench.seeds = vec![s];
            }
            for r in commands::cmd_benchmark(&cfg)? {
                println!(
                    "{:<12} {:<6} nfe {:>3}  W2² {:.4} ± {:.4}  ({} failed)",
                    r.task.to_string(),
                    r.method.to_string(),
                    r.nfe,
                    r.mean,
                    r.std,
                    r.failures()
                );
            }
        }
        Command::Ablate { kind, common } => {
            let cfg = commands::effective_config(common.config.as_deref(), &common.overrides())?;
            print!("{}", commands::cmd_ablate(kind, &cfg)?);
        }
        Command::Selftest => {
            let checks = selftest::run();
            for c in &checks {
                println!(
                    "{} {:<11} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
