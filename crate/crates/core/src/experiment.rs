//! Plan-then-simulate runs, parameter sweeps and CSV output.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mdp::{Kernel, Mdp};
use crate::persist::check_dimensions;
use crate::planner::{policy_iteration, reduced_state_plan, Plan, Policy, ReducedOptions};
use crate::selector::{Algorithm, Selector};
use crate::sim::{MetricsSummary, SimConfig, Simulator};

pub const CSV_HEADER: &str = "algorithm,gamma,p,q,bSmax,bDmax,alpha,subset_fraction,episodes,seed,\
mean_reward_bits,reward_stderr,energy_eff_bits_per_unit,ee_stderr,plan_seconds";

/// Stream of the configuration seed reserved for reduced-state sampling;
/// episodes use streams `0..episodes`.
const SUBSET_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Gamma,
    /// Harvest probability of both nodes (`p = q`).
    Eh,
    BsMax,
    BdMax,
    Alpha,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::Gamma, Axis::Eh, Axis::BsMax, Axis::BdMax, Axis::Alpha];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Gamma => "gamma",
            Axis::Eh => "eh",
            Axis::BsMax => "bsmax",
            Axis::BdMax => "bdmax",
            Axis::Alpha => "alpha",
        }
    }

    /// The configurations along this axis, in grid order.
    pub fn grid(self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let with = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Axis::Gamma => base.gamma_grid.iter().map(|&g| with(&|c| c.gamma = g)).collect(),
            Axis::Eh => base
                .eh_grid
                .iter()
                .map(|&p| {
                    with(&|c| {
                        c.p = p;
                        c.q = p;
                    })
                })
                .collect(),
            Axis::BsMax => base.bmax_grid.iter().map(|&b| with(&|c| c.b_s_max = b)).collect(),
            Axis::BdMax => base.bmax_grid.iter().map(|&b| with(&|c| c.b_d_max = b)).collect(),
            Axis::Alpha => base.alpha_grid.iter().map(|&a| with(&|c| c.alpha = a)).collect(),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown sweep axis '{s}'")))
    }
}

/// Result of the planning phase of one algorithm.
#[derive(Debug, Clone)]
pub struct Planned {
    pub algorithm: Algorithm,
    pub mdp: Mdp,
    pub plan: Option<Plan>,
    /// Wall time of policy computation (kernel construction excluded).
    pub seconds: f64,
}

impl Planned {
    pub fn policy(&self) -> Option<&Policy> {
        self.plan.as_ref().map(|p| &p.policy)
    }
}

pub fn decision_problem(cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<Mdp> {
    cfg.validate()?;
    algorithm.mdp(cfg.model()?, cfg.fixed_power_index()?)
}

/// Plans `algorithm` on a prebuilt kernel; GA and NA return no plan.
pub fn plan_on(cfg: &ExperimentConfig, algorithm: Algorithm, kernel: &Kernel, initial: usize) -> (Option<Plan>, f64) {
    let start = Instant::now();
    let plan = match algorithm {
        Algorithm::Ga | Algorithm::Na => None,
        Algorithm::Rsjpa => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(SUBSET_STREAM);
            let opts = ReducedOptions {
                force_include: Some(initial),
                bootstrap: cfg.bootstrap,
            };
            Some(reduced_state_plan(kernel, cfg.gamma, cfg.epsilon, cfg.subset_fraction, &mut rng, opts))
        }
        _ => Some(policy_iteration(kernel, cfg.gamma, cfg.epsilon)),
    };
    (plan, start.elapsed().as_secs_f64())
}

pub fn plan(cfg: &ExperimentConfig, algorithm: Algorithm, exec: Exec) -> Result<Planned> {
    let mdp = decision_problem(cfg, algorithm)?;
    let (plan, seconds) = if algorithm.plans() {
        let kernel = Kernel::build_with(&mdp, exec);
        let initial = mdp.space().index(&mdp.initial_state())?;
        plan_on(cfg, algorithm, &kernel, initial)
    } else {
        (None, 0.0)
    };
    Ok(Planned {
        algorithm,
        mdp,
        plan,
        seconds,
    })
}

pub fn sim_config(cfg: &ExperimentConfig, mdp: &Mdp) -> SimConfig {
    let mut sim = SimConfig::new(cfg.gamma, cfg.episodes, mdp.initial_state(), cfg.seed).with_mode(cfg.mode);
    sim.discount_truncation = cfg.discount_truncation;
    sim
}

/// Monte Carlo estimate of `algorithm` on `mdp` under `policy`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    mdp: &Mdp,
    policy: Option<&Policy>,
    exec: Exec,
) -> Result<MetricsSummary> {
    let selector = Selector::for_algorithm(algorithm, policy.cloned())?;
    let sim = Simulator::new(mdp.clone());
    sim.estimate_with(&selector, &sim_config(cfg, mdp), exec)
}

/// Checks a loaded policy against the decision problem it will drive.
pub fn check_policy(mdp: &Mdp, policy: &Policy) -> Result<()> {
    check_dimensions(policy, mdp.space(), mdp.num_power_levels())?;
    policy.check_feasible(&Kernel::build(mdp))
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub b_s_max: u32,
    pub b_d_max: u32,
    pub alpha: f64,
    pub subset_fraction: f64,
    pub episodes: usize,
    pub seed: u64,
    pub metrics: MetricsSummary,
    pub plan_seconds: f64,
}

impl Row {
    pub fn new(cfg: &ExperimentConfig, algorithm: Algorithm, metrics: MetricsSummary, plan_seconds: f64) -> Self {
        Self {
            algorithm,
            gamma: cfg.gamma,
            p: cfg.p,
            q: cfg.q,
            b_s_max: cfg.b_s_max,
            b_d_max: cfg.b_d_max,
            alpha: cfg.alpha,
            subset_fraction: cfg.subset_fraction,
            episodes: cfg.episodes,
            seed: cfg.seed,
            metrics,
            plan_seconds: if cfg.plan_timing { plan_seconds } else { 0.0 },
        }
    }

    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{:e},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.gamma,
            self.p,
            self.q,
            self.b_s_max,
            self.b_d_max,
            self.alpha,
            self.subset_fraction,
            self.episodes,
            self.seed,
            m.mean_reward,
            m.reward_stderr,
            m.mean_energy_efficiency,
            m.ee_stderr,
            self.plan_seconds
        )
    }
}

/// Plans and simulates one algorithm under `cfg`.
pub fn run(cfg: &ExperimentConfig, algorithm: Algorithm, exec: Exec) -> Result<Row> {
    let planned = plan(cfg, algorithm, exec)?;
    let metrics = evaluate(cfg, algorithm, &planned.mdp, planned.policy(), exec)?;
    Ok(Row::new(cfg, algorithm, metrics, planned.seconds))
}

/// Every configured algorithm at every grid point of `axis`. Rows come out
/// grid point major, algorithms in configuration order.
pub fn sweep(cfg: &ExperimentConfig, axis: Axis, exec: Exec) -> Result<Vec<Row>> {
    let jobs: Vec<(ExperimentConfig, Algorithm)> = axis
        .grid(cfg)
        .into_iter()
        .flat_map(|c| cfg.algorithms.iter().map(move |&a| (c.clone(), a)))
        .collect();
    for (c, _) in &jobs {
        c.validate()?;
    }
    exec.map_slice(&jobs, |(c, a)| run(c, *a, exec)).into_iter().collect()
}

/// Writes the hash comment, the header and the rows.
pub fn write_csv<W: Write>(mut out: W, config_hash: &str, rows: &[Row]) -> Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    out.flush()?;
    Ok(())
}

/// Planning wall times of full policy iteration and of the reduced-state
/// planner on the same kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub full_seconds: Vec<f64>,
    pub reduced_seconds: Vec<f64>,
    pub subset_fraction: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl BenchReport {
    pub fn full_median(&self) -> f64 {
        median(&self.full_seconds)
    }

    pub fn reduced_median(&self) -> f64 {
        median(&self.reduced_seconds)
    }

    /// Relative saving of the reduced planner, in percent.
    pub fn reduction_percent(&self) -> f64 {
        100.0 * (1.0 - self.reduced_median() / self.full_median())
    }
}

/// Alternates full and reduced planning `runs` times on the joint problem.
pub fn bench_planning(cfg: &ExperimentConfig, runs: usize) -> Result<BenchReport> {
    assert!(runs >= 1);
    let mdp = decision_problem(cfg, Algorithm::Ojpa)?;
    let kernel = Kernel::build(&mdp);
    let initial = mdp.space().index(&mdp.initial_state())?;
    let mut report = BenchReport {
        full_seconds: Vec::with_capacity(runs),
        reduced_seconds: Vec::with_capacity(runs),
        subset_fraction: cfg.subset_fraction,
    };
    for _ in 0..runs {
        report.full_seconds.push(plan_on(cfg, Algorithm::Ojpa, &kernel, initial).1);
        report.reduced_seconds.push(plan_on(cfg, Algorithm::Rsjpa, &kernel, initial).1);
    }
    Ok(report)
}
