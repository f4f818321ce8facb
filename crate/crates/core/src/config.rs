//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, unknown or repeated keys are
//! errors and absent keys take the reference defaults (2 MHz bandwidth,
//! two gain levels, 0.5/1/2 mW power levels, 5-unit batteries, ...).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mdp::SystemState;
use crate::model::{ChannelModel, EnergyModel, Link, RadioModel, SystemModel, LINKS};
use crate::planner::{Bootstrap, DEFAULT_EPSILON};
use crate::selector::Algorithm;
use crate::sim::Mode;

/// Axis values swept when a grid is not configured.
pub const DEFAULT_GAMMA_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
pub const DEFAULT_EH_GRID: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_BMAX_GRID: [u32; 5] = [3, 4, 5, 6, 7];
pub const DEFAULT_ALPHA_GRID: [f64; 7] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub e_h_units: u32,
    pub b_s_max: u32,
    pub b_d_max: u32,
    pub ts_ms: f64,
    pub tx_ms: f64,
    pub energy_unit_uj: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub alpha: f64,
    pub power_levels_mw: Vec<f64>,
    pub gain_levels: Vec<f64>,
    /// Row-major transition matrix per link (SD, SE, DD, DE).
    pub channel_transition: [Vec<f64>; LINKS],
    pub epsilon: f64,
    pub episodes: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub subset_fraction: f64,
    pub fixed_power_mw: f64,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub discount_truncation: f64,
    pub bootstrap: Bootstrap,
    /// Record planning wall time in sweep rows. Off by default so that sweep
    /// output is byte-identical across runs.
    pub plan_timing: bool,
    pub gamma_grid: Vec<f64>,
    pub eh_grid: Vec<f64>,
    pub bmax_grid: Vec<u32>,
    pub alpha_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let energy = EnergyModel::default();
        let radio = RadioModel::default();
        let channel = ChannelModel::default();
        Self {
            gamma: 0.9,
            p: energy.p_source,
            q: energy.p_dest,
            e_h_units: energy.harvest_units,
            b_s_max: energy.b_max_source,
            b_d_max: energy.b_max_dest,
            ts_ms: 10.0,
            tx_ms: 5.0,
            energy_unit_uj: 2.5,
            bandwidth_hz: radio.bandwidth_hz,
            noise_psd_w_per_hz: radio.noise_psd,
            alpha: radio.alpha,
            power_levels_mw: vec![0.0, 0.5, 1.0, 2.0],
            gain_levels: channel.levels,
            channel_transition: channel.transitions,
            epsilon: DEFAULT_EPSILON,
            episodes: 10_000,
            seed: 1,
            algorithms: vec![Algorithm::Ojpa],
            subset_fraction: 0.5,
            fixed_power_mw: 2.0,
            mode: Mode::SampledLifetime,
            out: None,
            discount_truncation: 1e-6,
            bootstrap: Bootstrap::Zero,
            plan_timing: false,
            gamma_grid: DEFAULT_GAMMA_GRID.to_vec(),
            eh_grid: DEFAULT_EH_GRID.to_vec(),
            bmax_grid: DEFAULT_BMAX_GRID.to_vec(),
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("{key}: cannot parse '{}'", v.trim()))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|x| parse_num(key, x)).collect()
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(format!("{key}: expected true/false, got '{other}'")),
    }
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Reads and validates a configuration file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses configuration text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim().to_ascii_lowercase();
            if seen.contains(&key) {
                return Err(err(format!("duplicate key '{key}'")));
            }
            cfg.set(&key, value.trim()).map_err(err)?;
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "gamma" => self.gamma = parse_num(key, v)?,
            "p" => self.p = parse_num(key, v)?,
            "q" => self.q = parse_num(key, v)?,
            "e_h_units" => self.e_h_units = parse_num(key, v)?,
            "b_s_max" => self.b_s_max = parse_num(key, v)?,
            "b_d_max" => self.b_d_max = parse_num(key, v)?,
            "ts_ms" => self.ts_ms = parse_num(key, v)?,
            "tx_ms" => self.tx_ms = parse_num(key, v)?,
            "energy_unit_uj" => self.energy_unit_uj = parse_num(key, v)?,
            "bandwidth_hz" => self.bandwidth_hz = parse_num(key, v)?,
            "noise_psd_w_per_hz" => self.noise_psd_w_per_hz = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "power_levels_mw" => self.power_levels_mw = parse_list(key, v)?,
            "gain_levels" => self.gain_levels = parse_list(key, v)?,
            "channel_transition" => {
                let m: Vec<f64> = parse_list(key, v)?;
                self.channel_transition = [m.clone(), m.clone(), m.clone(), m];
            }
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "episodes" => self.episodes = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "algorithm" => {
                self.algorithms = v
                    .split(',')
                    .map(|a| a.parse::<Algorithm>().map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "subset_fraction" => self.subset_fraction = parse_num(key, v)?,
            "fixed_power_mw" => self.fixed_power_mw = parse_num(key, v)?,
            "mode" => {
                self.mode = match v {
                    "sampled" => Mode::SampledLifetime,
                    "discounted" => Mode::Discounted,
                    other => return Err(format!("mode: expected sampled|discounted, got '{other}'")),
                }
            }
            "out" => self.out = Some(PathBuf::from(v)),
            "discount_truncation" => self.discount_truncation = parse_num(key, v)?,
            "bootstrap" => {
                self.bootstrap = match v {
                    "zero" => Bootstrap::Zero,
                    "greedy" => Bootstrap::GreedyReward,
                    other => return Err(format!("bootstrap: expected zero|greedy, got '{other}'")),
                }
            }
            "plan_timing" => self.plan_timing = parse_bool(key, v)?,
            "gamma_grid" => self.gamma_grid = parse_list(key, v)?,
            "eh_grid" => self.eh_grid = parse_list(key, v)?,
            "bmax_grid" => self.bmax_grid = parse_list(key, v)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, v)?,
            _ => {
                let link = key
                    .strip_prefix("channel_transition_")
                    .and_then(|l| Link::ALL.into_iter().find(|x| x.name() == l));
                match link {
                    Some(link) => self.channel_transition[link as usize] = parse_list(key, v)?,
                    None => return Err(format!("unknown key '{key}'")),
                }
            }
        }
        Ok(())
    }

    /// Checks every field against its owning model's invariants.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.fixed_power_index()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma = {} must lie in [0, 1)", self.gamma)));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(Error::Config(format!("gamma_grid value {g} must lie in [0, 1)")));
        }
        if let Some(p) = self.eh_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("eh_grid value {p} is not a probability")));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha_grid value {a} must lie in [0, 1]")));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::Config("subset_fraction must lie in (0, 1]".into()));
        }
        if !(self.discount_truncation > 0.0 && self.discount_truncation < 1.0) {
            return Err(Error::Config("discount_truncation must lie in (0, 1)".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithm list is empty".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<SystemModel> {
        let channel = ChannelModel {
            levels: self.gain_levels.clone(),
            transitions: self.channel_transition.clone(),
        };
        let energy = EnergyModel {
            harvest_units: self.e_h_units,
            p_source: self.p,
            p_dest: self.q,
            b_max_source: self.b_s_max,
            b_max_dest: self.b_d_max,
            unit_joules: self.energy_unit_uj / 1e6,
        };
        let radio = RadioModel {
            bandwidth_hz: self.bandwidth_hz,
            noise_psd: self.noise_psd_w_per_hz,
            alpha: self.alpha,
            slot_seconds: self.ts_ms / 1e3,
            tx_seconds: self.tx_ms / 1e3,
            power_levels: self.power_levels_mw.iter().map(|p| p / 1e3).collect(),
        };
        SystemModel::new(channel, energy, radio)
    }

    /// Index of `fixed_power_mw` among the power levels.
    pub fn fixed_power_index(&self) -> Result<usize> {
        self.power_levels_mw
            .iter()
            .position(|&p| (p - self.fixed_power_mw).abs() <= 1e-9 * p.abs().max(1.0))
            .ok_or_else(|| {
                Error::Config(format!(
                    "fixed_power_mw = {} is not one of power_levels_mw",
                    self.fixed_power_mw
                ))
            })
    }

    /// Initial state of every simulated episode.
    pub fn initial_state(&self, algorithm: Algorithm) -> Result<SystemState> {
        Ok(algorithm
            .mdp(self.model()?, self.fixed_power_index()?)?
            .initial_state())
    }

    /// Canonical text form: every key, fixed order, values that parse back
    /// to the identical configuration.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            Mode::SampledLifetime => "sampled",
            Mode::Discounted => "discounted",
        };
        let bootstrap = match self.bootstrap {
            Bootstrap::Zero => "zero",
            Bootstrap::GreedyReward => "greedy",
        };
        let algorithms: Vec<&str> = self.algorithms.iter().map(|a| a.name()).collect();
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "e_h_units = {}", self.e_h_units);
        let _ = writeln!(s, "b_s_max = {}", self.b_s_max);
        let _ = writeln!(s, "b_d_max = {}", self.b_d_max);
        let _ = writeln!(s, "ts_ms = {}", self.ts_ms);
        let _ = writeln!(s, "tx_ms = {}", self.tx_ms);
        let _ = writeln!(s, "energy_unit_uj = {}", self.energy_unit_uj);
        let _ = writeln!(s, "bandwidth_hz = {}", self.bandwidth_hz);
        let _ = writeln!(s, "noise_psd_w_per_hz = {:e}", self.noise_psd_w_per_hz);
        let _ = writeln!(s, "alpha = {:e}", self.alpha);
        let _ = writeln!(s, "power_levels_mw = {}", join(&self.power_levels_mw));
        let _ = writeln!(s, "gain_levels = {}", join(&self.gain_levels));
        for link in Link::ALL {
            let _ = writeln!(
                s,
                "channel_transition_{} = {}",
                link.name(),
                join(&self.channel_transition[link as usize])
            );
        }
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "algorithm = {}", algorithms.join(","));
        let _ = writeln!(s, "subset_fraction = {}", self.subset_fraction);
        let _ = writeln!(s, "fixed_power_mw = {}", self.fixed_power_mw);
        let _ = writeln!(s, "mode = {mode}");
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        let _ = writeln!(s, "discount_truncation = {:e}", self.discount_truncation);
        let _ = writeln!(s, "bootstrap = {bootstrap}");
        let _ = writeln!(s, "plan_timing = {}", self.plan_timing);
        let _ = writeln!(s, "gamma_grid = {}", join(&self.gamma_grid));
        let _ = writeln!(s, "eh_grid = {}", join(&self.eh_grid));
        let _ = writeln!(s, "bmax_grid = {}", join(&self.bmax_grid));
        let _ = writeln!(s, "alpha_grid = {}", join(&self.alpha_grid));
        s
    }

    /// First 16 hex digits of the SHA-256 of [`render`](Self::render).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_file_is_reference_configuration() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let m = cfg.model().unwrap();
        assert_eq!(m, SystemModel::default());
        assert_eq!(m.costs(), &[0, 1, 2, 4]);
        assert_eq!(m.radio.alpha, 1e-5);
        assert_eq!(m.radio.noise_psd, 10f64.powf(-20.4));
        assert_eq!(cfg.epsilon, 0.07);
    }

    #[test]
    fn alpha_key_sets_radio() {
        let cfg = parse("alpha = 1e-5\n").unwrap();
        assert_eq!(cfg.model().unwrap().radio.alpha, 1e-5);
        let cfg = parse("alpha = 0.25 # comment\n").unwrap();
        assert_eq!(cfg.model().unwrap().radio.alpha, 0.25);
    }

    #[test]
    fn probability_out_of_range_is_validation_error() {
        let err = parse("p = 1.5").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("p = 1.5")), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("# header\n\ngamma = 0.9\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse("gamma 0.9").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse("gamma = x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse("seed = 1\nseed = 2").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn per_link_transition_override() {
        let cfg = parse("channel_transition_de = 0.5,0.5,0.5,0.5").unwrap();
        assert_eq!(cfg.channel_transition[Link::De as usize], vec![0.5; 4]);
        assert_eq!(cfg.channel_transition[Link::Sd as usize], vec![0.9, 0.1, 0.1, 0.9]);
        assert!(parse("channel_transition_xx = 1").is_err());
        assert!(parse("channel_transition_sd = 0.5,0.6,0.1,0.9").is_err());
    }

    #[test]
    fn algorithm_list_and_fixed_power() {
        let cfg = parse("algorithm = ojpa, na ,itpa\nfixed_power_mw = 0.5").unwrap();
        assert_eq!(cfg.algorithms, vec![Algorithm::Ojpa, Algorithm::Na, Algorithm::Itpa]);
        assert_eq!(cfg.fixed_power_index().unwrap(), 1);
        assert!(parse("fixed_power_mw = 0.7").is_err());
        assert!(parse("algorithm = dqn").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "gamma = 1.0",
            "episodes = 0",
            "subset_fraction = 0",
            "epsilon = 0",
            "tx_ms = 20",
            "power_levels_mw = 0,0.3",
            "gain_levels = 2e-13,1e-13",
            "mode = fast",
            "alpha = -1",
        ] {
            assert!(parse(text).is_err(), "{text} should be rejected");
        }
    }

    #[test]
    fn render_round_trips_default() {
        let cfg = ExperimentConfig::default();
        assert_eq!(parse(&cfg.render()).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn render_round_trips(gamma in 0.0f64..0.999, p in 0.0f64..=1.0, alpha in 0.0f64..=1.0, seed: u64, episodes in 1usize..100_000, b in 0u32..9) {
            let cfg = ExperimentConfig { gamma, p, alpha, seed, episodes, b_s_max: b, mode: Mode::Discounted, ..ExperimentConfig::default() };
            let back = parse(&cfg.render()).unwrap();
            prop_assert_eq!(back.hash(), cfg.hash());
            prop_assert_eq!(back, cfg);
        }
    }
}
