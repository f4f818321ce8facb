//! Transmission-phase Monte Carlo.
//!
//! Each episode draws from its own ChaCha8 stream: the generator is seeded
//! with the run seed and the episode index selects the stream, so episode `i`
//! sees the same random numbers whatever thread runs it. Within an episode
//! the draw order is fixed (lifetime first, then per slot: source harvest,
//! destination harvest, then the four links), which also gives common random
//! numbers across algorithms run with the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::Result;
use crate::exec::Exec;
use crate::mdp::{Action, Mdp, RewardTable, Supply, SystemState};
use crate::model::{battery_next, LINKS};
use crate::selector::Selector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Geometric lifetime per episode, undiscounted reward sum.
    #[default]
    SampledLifetime,
    /// Slot `k` weighted by `gamma^k`, truncated once the weight is tiny.
    Discounted,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub gamma: f64,
    pub episodes: usize,
    pub initial_state: SystemState,
    pub mode: Mode,
    pub seed: u64,
    /// Discounted mode stops at the first slot whose weight is below this.
    pub discount_truncation: f64,
}

impl SimConfig {
    pub fn new(gamma: f64, episodes: usize, initial_state: SystemState, seed: u64) -> Self {
        Self {
            gamma,
            episodes,
            initial_state,
            mode: Mode::SampledLifetime,
            seed,
            discount_truncation: 1e-6,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub lifetime: u64,
    /// Secure bits (discount-weighted in discounted mode).
    pub secure_bits: f64,
    /// Energy radiated by both nodes, in units, unweighted.
    pub transmitted_energy: u64,
    /// Radiated energy with the same weights as `secure_bits`.
    pub weighted_energy: f64,
    /// Per node (source, destination): units drawn from the battery.
    pub spent: [u64; 2],
    /// Per node: harvested units actually stored (after clamping).
    pub harvested: [u64; 2],
    pub initial_battery: [u32; 2],
    pub final_battery: [u32; 2],
    pub trace: Option<Vec<(SystemState, Action, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub mean_reward: f64,
    pub reward_stderr: f64,
    pub mean_energy_efficiency: f64,
    pub ee_stderr: f64,
    pub mean_lifetime: f64,
    pub episodes: usize,
}

/// Generator for episode `index` of a run seeded with `seed`.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Network lifetime in slots: `P[K = k] = gamma^(k-1) (1 - gamma)`.
pub fn sample_lifetime<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> u64 {
    assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
    let failures = Geometric::new(1.0 - gamma).expect("valid probability");
    1 + failures.sample(rng)
}

/// Secure bits per unit of radiated energy; zero when nothing was radiated.
pub fn energy_efficiency_of(record: &EpisodeRecord) -> f64 {
    if record.transmitted_energy == 0 {
        0.0
    } else {
        record.secure_bits / record.weighted_energy
    }
}

/// Mean and standard error (sample std / sqrt(n)).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[inline]
fn next_level<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left `acc` a hair under 1; take the last reachable level.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Physical system driven by selectors.
#[derive(Debug, Clone)]
pub struct Simulator {
    mdp: Mdp,
    rewards: RewardTable,
}

impl Simulator {
    pub fn new(mdp: Mdp) -> Self {
        let rewards = RewardTable::new(&mdp);
        Self { mdp, rewards }
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn rewards(&self) -> &RewardTable {
        &self.rewards
    }

    /// Runs `slots` slots from `s0`, weighting slot `k` by `discount^k`.
    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        selector: &Selector,
        s0: SystemState,
        slots: u64,
        discount: f64,
        record_trace: bool,
        rng: &mut R,
    ) -> Result<EpisodeRecord> {
        assert!(slots >= 1, "an episode lasts at least one slot");
        let mdp = &self.mdp;
        let space = mdp.space();
        space.index(&s0)?;
        let energy = &mdp.model.energy;
        let channel = &mdp.model.channel;

        let mut s = s0;
        let mut weight = 1.0;
        let mut rec = EpisodeRecord {
            lifetime: slots,
            secure_bits: 0.0,
            transmitted_energy: 0,
            weighted_energy: 0.0,
            spent: [0; 2],
            harvested: [0; 2],
            initial_battery: [s0.b_source, s0.b_dest],
            final_battery: [0; 2],
            trace: record_trace.then(Vec::new),
        };
        for _ in 0..slots {
            let a = selector.select(mdp, &self.rewards, &s)?;
            debug_assert!(mdp.is_feasible(&s, a), "infeasible action {a:?} in {s}");
            let r = self.rewards.get(space.gain_index(&s.gains), a.index(mdp.num_power_levels()));
            let radiated = mdp.radiated_energy(a);
            rec.secure_bits += weight * r;
            rec.transmitted_energy += u64::from(radiated);
            rec.weighted_energy += weight * f64::from(radiated);
            if let Some(t) = rec.trace.as_mut() {
                t.push((s, a, r));
            }

            let (cost_s, cost_d) = mdp.battery_debit(a);
            let harvest_s = rng.random::<f64>() < energy.p_source;
            let harvest_d = rng.random::<f64>() < energy.p_dest;
            let step = |supply: Supply, b: u32, cost: u32, h: bool, b_max: u32| match supply {
                Supply::Harvesting => battery_next(b, cost, h, b_max, energy.harvest_units),
                Supply::Mains { .. } => b,
            };
            let bs = step(mdp.source, s.b_source, cost_s, harvest_s, space.b_max_source);
            let bd = step(mdp.dest, s.b_dest, cost_d, harvest_d, space.b_max_dest);
            rec.spent[0] += u64::from(cost_s);
            rec.spent[1] += u64::from(cost_d);
            rec.harvested[0] += u64::from(bs - (s.b_source - cost_s));
            rec.harvested[1] += u64::from(bd - (s.b_dest - cost_d));

            let mut gains = [0; LINKS];
            for (link, g) in gains.iter_mut().enumerate() {
                *g = next_level(channel.row(link, s.gains[link]), rng);
            }
            s = SystemState::new(gains, bs, bd);
            weight *= discount;
        }
        rec.final_battery = [s.b_source, s.b_dest];
        Ok(rec)
    }

    /// Episode `index` of a run, with its own substream.
    pub fn episode(&self, selector: &Selector, cfg: &SimConfig, index: u64, record_trace: bool) -> Result<EpisodeRecord> {
        let mut rng = episode_rng(cfg.seed, index);
        let (slots, discount) = match cfg.mode {
            Mode::SampledLifetime => (sample_lifetime(cfg.gamma, &mut rng), 1.0),
            Mode::Discounted => (discounted_horizon(cfg.gamma, cfg.discount_truncation), cfg.gamma),
        };
        self.run_episode(selector, cfg.initial_state, slots, discount, record_trace, &mut rng)
    }

    pub fn estimate(&self, selector: &Selector, cfg: &SimConfig) -> Result<MetricsSummary> {
        self.estimate_with(selector, cfg, Exec::default())
    }

    /// Runs every episode. Episodes are grouped in fixed-size chunks of
    /// consecutive indices; chunk moments are merged in chunk order, so the
    /// summary does not depend on scheduling.
    pub fn estimate_with(&self, selector: &Selector, cfg: &SimConfig, exec: Exec) -> Result<MetricsSummary> {
        assert!(cfg.episodes >= 1, "at least one episode");
        let chunks = cfg.episodes.div_ceil(CHUNK);
        let partial = exec.map_range(chunks, |c| -> Result<(Moments, Moments, u64)> {
            let mut bits = Moments::default();
            let mut ee = Moments::default();
            let mut lifetime = 0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.episodes) {
                let r = self.episode(selector, cfg, i as u64, false)?;
                bits.push(r.secure_bits);
                ee.push(energy_efficiency_of(&r));
                lifetime += r.lifetime;
            }
            Ok((bits, ee, lifetime))
        });
        let mut bits = Moments::default();
        let mut ee = Moments::default();
        let mut lifetime = 0u64;
        for p in partial {
            let (b, e, k) = p?;
            bits = bits.merge(b);
            ee = ee.merge(e);
            lifetime += k;
        }
        Ok(MetricsSummary {
            mean_reward: bits.mean,
            reward_stderr: bits.stderr(),
            mean_energy_efficiency: ee.mean,
            ee_stderr: ee.stderr(),
            mean_lifetime: lifetime as f64 / cfg.episodes as f64,
            episodes: cfg.episodes,
        })
    }
}

const CHUNK: usize = 1024;

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0) / self.n).sqrt()
        }
    }
}

/// Slots simulated in discounted mode: the first `k` with `gamma^k < truncation`.
pub fn discounted_horizon(gamma: f64, truncation: f64) -> u64 {
    assert!(truncation > 0.0 && truncation < 1.0);
    if gamma == 0.0 {
        return 1;
    }
    let mut k = 0u64;
    let mut w = 1.0;
    while w >= truncation {
        w *= gamma;
        k += 1;
    }
    k
}
