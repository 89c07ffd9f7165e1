use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mogrpo_core::experiments::{self, Experiment, RunConfig};
use mogrpo_core::Estimator;

#[derive(Parser)]
#[command(
    name = "mogrpo",
    version,
    about = "Multi-objective group-relative policy optimization lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the three-output worked example under every estimator.
    DemoAdvantage,
    /// Check predicted vs empirical advantage correlations, the reversal example and affine invariance.
    Verify(VerifyArgs),
    /// Train on the 50-arm, 3-objective bandit.
    RunBandit(TrainArgs),
    /// Train on the 4-target reacher.
    RunReacher(ReacherArgs),
    /// Aggregate every finals.csv under a directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run-config file (TOML); defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Built-in reward model.
    #[arg(long, value_parser = ["fig1", "bandit"])]
    preset: Option<String>,
    /// Reward model file with `means` and `cov`; overrides --preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Pooled samples per estimator.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of seeds (base seed + index).
    #[arg(long)]
    seeds: Option<usize>,
    /// grpo, drgrpo, mogrpo or all.
    #[arg(long)]
    method: Option<String>,
    /// Divide MO-GRPO advantages by sqrt(K).
    #[arg(long)]
    sqrt_k_scale: bool,
    /// Training iterations per run.
    #[arg(long)]
    iterations: Option<usize>,
    /// Train runs one after another instead of on worker threads.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReacherArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Standard deviation of Gaussian noise added to the observed R1.
    #[arg(long)]
    r1_noise_std: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory to scan (defaults to --out or the configured output directory).
    dir: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn parse_methods(s: &str) -> Result<Vec<Estimator>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Estimator::ALL.to_vec());
    }
    s.split(',')
        .map(|m| {
            m.trim()
                .parse()
                .with_context(|| format!("bad --method `{s}`"))
        })
        .collect()
}

fn apply_train_args(cfg: &mut RunConfig, args: &TrainArgs, experiment: Experiment) -> Result<()> {
    if let Some(n) = args.seeds {
        cfg.run.seeds = n;
    }
    if let Some(m) = &args.method {
        cfg.run.methods = parse_methods(m)?;
    }
    if args.sqrt_k_scale {
        cfg.train.sqrt_k_scale = true;
    }
    if args.sequential {
        cfg.run.parallel = false;
    }
    if let Some(n) = args.iterations {
        match experiment {
            Experiment::Bandit => cfg.bandit.iterations = n,
            Experiment::Reacher => cfg.reacher.iterations = n,
        }
    }
    cfg.validate()?;
    Ok(())
}

fn batch_dir(cfg: &RunConfig, common: &CommonArgs, experiment: Experiment) -> PathBuf {
    if let Some(out) = &common.out {
        return out.clone();
    }
    let variant = cfg.variant(experiment);
    let name = if variant == "default" {
        experiment.name().to_string()
    } else {
        format!("{}_{}", experiment.name(), variant)
    };
    cfg.run.out.join(name)
}

fn run_training(cfg: &RunConfig, out: &Path, experiment: Experiment) -> Result<()> {
    if experiment == Experiment::Reacher {
        let sweep =
            mogrpo_core::envs::constant_velocity_sweep(&cfg.reacher.env, cfg.reacher.sweep_grid);
        println!(
            "constant-velocity sweep: score {:.4} per step at omega ({:+.3}, {:+.3}) (reference 1.76)",
            sweep.score, sweep.omega[0], sweep.omega[1]
        );
    }
    let res = experiments::run_batch(cfg, experiment, out)?;
    print!("{}", res.summary.render());
    println!("wrote {}", res.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::DemoAdvantage => {
            let report = experiments::demo_advantage();
            print!("{}", report.text);
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Verify(args) => {
            let mut cfg = load_config(&args.common)?;
            if let Some(p) = args.preset {
                cfg.verify.preset = p;
                cfg.verify.spec_file = None;
            }
            if let Some(s) = args.spec {
                cfg.verify.spec_file = Some(s);
            }
            if let Some(n) = args.samples {
                if n == 0 {
                    bail!("--samples must be positive");
                }
                cfg.verify.samples = n;
            }
            let out = args
                .common
                .out
                .clone()
                .unwrap_or_else(|| cfg.run.out.join("verify"));
            let outcome = experiments::cmd_verify(&cfg, &out)?;
            print!("{}", outcome.render());
            Ok(if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::RunBandit(args) => {
            let mut cfg = load_config(&args.common)?;
            apply_train_args(&mut cfg, &args, Experiment::Bandit)?;
            let out = batch_dir(&cfg, &args.common, Experiment::Bandit);
            run_training(&cfg, &out, Experiment::Bandit)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::RunReacher(args) => {
            let mut cfg = load_config(&args.train.common)?;
            if let Some(s) = args.r1_noise_std {
                cfg.reacher.env.r1_noise_std = s;
            }
            apply_train_args(&mut cfg, &args.train, Experiment::Reacher)?;
            let out = batch_dir(&cfg, &args.train.common, Experiment::Reacher);
            run_training(&cfg, &out, Experiment::Reacher)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report(args) => {
            let cfg = load_config(&args.common)?;
            let dir = args.dir.or(args.common.out).unwrap_or(cfg.run.out);
            for table in experiments::cmd_report(&dir)? {
                println!("{}", table.render());
            }
            println!("wrote {}", dir.join("summary.csv").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
