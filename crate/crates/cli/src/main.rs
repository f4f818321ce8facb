use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use secpower_core::experiment::{self, bench_planning, check_policy, sweep, write_csv, Row};
use secpower_core::persist::{load_policy, save_policy};
use secpower_core::{Algorithm, Axis, Exec, ExperimentConfig};

#[derive(Parser)]
#[command(name = "secpower", version, about = "Secrecy-aware power allocation: plan, simulate, sweep")]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a look-up policy and write it to a file.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Planning algorithm; defaults to the first planning algorithm in the config.
        #[arg(long)]
        algorithm: Option<Algorithm>,
    },
    /// Estimate metrics for each configured algorithm and print CSV rows.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Policy to use instead of planning (requires a single planning algorithm).
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured algorithm along one parameter axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: Axis,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare planning time of full and reduced-state policy iteration.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 11)]
        runs: usize,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn output(path: Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn plan(cfg: &ExperimentConfig, out: &PathBuf, algorithm: Option<Algorithm>, exec: Exec) -> Result<()> {
    let algorithm = match algorithm {
        Some(a) => a,
        None => match cfg.algorithms.iter().find(|a| a.plans()) {
            Some(&a) => a,
            None => bail!("no planning algorithm in the configuration"),
        },
    };
    if !algorithm.plans() {
        bail!("{algorithm} has no planning phase");
    }
    let planned = experiment::plan(cfg, algorithm, exec)?;
    let p = planned.plan.as_ref().expect("planning algorithm returns a plan");
    save_policy(&p.policy, out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "{algorithm}: {} of {} states planned, {} improvement rounds, {} sweeps, {:.3} ms -> {}",
        p.policy.planned_count(),
        planned.mdp.space().num_states(),
        p.iterations,
        p.sweeps,
        planned.seconds * 1e3,
        out.display()
    );
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, policy: Option<PathBuf>, out: Option<PathBuf>, exec: Exec) -> Result<()> {
    let mut rows: Vec<Row> = Vec::new();
    match policy {
        Some(path) => {
            let [algorithm] = cfg.algorithms[..] else {
                bail!("--policy needs exactly one algorithm in the configuration");
            };
            if !algorithm.plans() {
                bail!("{algorithm} does not use a policy");
            }
            let policy = load_policy(&path).with_context(|| format!("loading policy {}", path.display()))?;
            let mdp = experiment::decision_problem(cfg, algorithm)?;
            check_policy(&mdp, &policy).with_context(|| format!("policy {}", path.display()))?;
            let metrics = experiment::evaluate(cfg, algorithm, &mdp, Some(&policy), exec)?;
            rows.push(Row::new(cfg, algorithm, metrics, 0.0));
        }
        None => {
            for &a in &cfg.algorithms {
                rows.push(experiment::run(cfg, a, exec)?);
            }
        }
    }
    write_csv(output(out)?, &cfg.hash(), &rows)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Plan { config, out, algorithm } => plan(&load(&config)?, &out, algorithm, exec),
        Command::Simulate { config, policy, out } => {
            let cfg = load(&config)?;
            let out = out.or_else(|| cfg.out.clone());
            simulate(&cfg, policy, out, exec)
        }
        Command::Sweep { config, axis, out } => {
            let cfg = load(&config)?;
            let rows = sweep(&cfg, axis, exec)?;
            write_csv(output(out.or_else(|| cfg.out.clone()))?, &cfg.hash(), &rows)?;
            Ok(())
        }
        Command::Bench { config, runs } => {
            if runs < 5 {
                bail!("--runs must be at least 5");
            }
            let r = bench_planning(&load(&config)?, runs)?;
            println!("runs={runs} subset_fraction={}", r.subset_fraction);
            println!("ojpa_median_seconds={:e}", r.full_median());
            println!("rsjpa_median_seconds={:e}", r.reduced_median());
            println!("reduction_percent={:.1}", r.reduction_percent());
            Ok(())
        }
    }
}
