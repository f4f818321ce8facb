//! Physical layer and energy models.
//!
//! Everything that depends only on physical parameters lives here: channel
//! quantization and its Markov transitions, Bernoulli energy arrivals, battery
//! bookkeeping in integer energy units, SINR at destination and eavesdropper,
//! and the per-slot secure-bit reward.
//!
//! Rates are evaluated in `f64`; energy is always an exact integer count of
//! units so that battery levels can index the MDP state without drift.

use crate::error::{Error, Result};

/// Number of links tracked in the state (SD, SE, DD, DE).
pub const LINKS: usize = 4;

/// Tolerance used when checking that transition rows are stochastic.
const ROW_SUM_TOL: f64 = 1e-12;

/// Relative tolerance for the power × time / unit integrality check.
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Source to destination.
    Sd = 0,
    /// Source to eavesdropper.
    Se = 1,
    /// Destination self-interference loop.
    Dd = 2,
    /// Destination (jammer) to eavesdropper.
    De = 3,
}

impl Link {
    pub const ALL: [Link; LINKS] = [Link::Sd, Link::Se, Link::Dd, Link::De];

    pub fn name(self) -> &'static str {
        match self {
            Link::Sd => "sd",
            Link::Se => "se",
            Link::Dd => "dd",
            Link::De => "de",
        }
    }
}

/// Quantized channel gains shared by all links plus one first-order Markov
/// transition matrix per link (row-major, `L x L`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub levels: Vec<f64>,
    pub transitions: [Vec<f64>; LINKS],
}

impl ChannelModel {
    /// Same transition matrix on every link.
    pub fn shared(levels: Vec<f64>, transition: Vec<f64>) -> Self {
        Self {
            levels,
            transitions: [
                transition.clone(),
                transition.clone(),
                transition.clone(),
                transition,
            ],
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Probability that `link` moves from level `from` to level `to`.
    #[inline]
    pub fn prob(&self, link: usize, from: usize, to: usize) -> f64 {
        self.transitions[link][from * self.levels.len() + to]
    }

    pub fn row(&self, link: usize, from: usize) -> &[f64] {
        let l = self.levels.len();
        &self.transitions[link][from * l..(from + 1) * l]
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.levels.len();
        if l == 0 {
            return Err(Error::Config("gain_levels must not be empty".into()));
        }
        if self.levels.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Config(
                "gain_levels must be finite and strictly positive".into(),
            ));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("gain_levels must be strictly increasing".into()));
        }
        for link in Link::ALL {
            let m = &self.transitions[link as usize];
            if m.len() != l * l {
                return Err(Error::Config(format!(
                    "channel_transition for link {} has {} entries, expected {}",
                    link.name(),
                    m.len(),
                    l * l
                )));
            }
            for (r, row) in m.chunks(l).enumerate() {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::Config(format!(
                        "channel_transition for link {} row {r} has entries outside [0,1]",
                        link.name()
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Config(format!(
                        "channel_transition for link {} row {r} sums to {sum}",
                        link.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::shared(vec![1.655e-13, 3.311e-13], vec![0.9, 0.1, 0.1, 0.9])
    }
}

/// Bernoulli energy arrivals and battery capacities, all in integer units.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub harvest_units: u32,
    pub p_source: f64,
    pub p_dest: f64,
    pub b_max_source: u32,
    pub b_max_dest: u32,
    pub unit_joules: f64,
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p", self.p_source), ("q", self.p_dest)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "{name} = {p} is not a probability in [0, 1]"
                )));
            }
        }
        if !(self.unit_joules.is_finite() && self.unit_joules > 0.0) {
            return Err(Error::Config("energy_unit_uj must be positive".into()));
        }
        Ok(())
    }
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            harvest_units: 2,
            p_source: 0.8,
            p_dest: 0.8,
            b_max_source: 5,
            b_max_dest: 5,
            unit_joules: 2.5e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioModel {
    pub bandwidth_hz: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Residual self-interference after cancellation, in [0, 1].
    pub alpha: f64,
    pub slot_seconds: f64,
    pub tx_seconds: f64,
    /// Available power levels in W, ascending, first level zero.
    pub power_levels: Vec<f64>,
}

impl RadioModel {
    pub fn noise_power(&self) -> f64 {
        self.bandwidth_hz * self.noise_psd
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha = {} must lie in [0, 1]",
                self.alpha
            )));
        }
        if !(self.tx_seconds > 0.0 && self.tx_seconds <= self.slot_seconds) {
            return Err(Error::Config(
                "tx_ms must satisfy 0 < tx_ms <= ts_ms".into(),
            ));
        }
        if !(self.bandwidth_hz > 0.0 && self.noise_psd > 0.0) {
            return Err(Error::Config(
                "bandwidth_hz and noise_psd_w_per_hz must be positive".into(),
            ));
        }
        if self.power_levels.first() != Some(&0.0) {
            return Err(Error::Config("power_levels_mw must start with 0".into()));
        }
        if self.power_levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "power_levels_mw must be strictly ascending".into(),
            ));
        }
        Ok(())
    }
}

impl Default for RadioModel {
    fn default() -> Self {
        Self {
            bandwidth_hz: 2e6,
            noise_psd: 10f64.powf(-20.4),
            alpha: 1e-5,
            slot_seconds: 10e-3,
            tx_seconds: 5e-3,
            power_levels: vec![0.0, 0.5e-3, 1e-3, 2e-3],
        }
    }
}

/// Energy units drawn by one slot at `power_levels[power_index]`.
///
/// Fails when the product is not an integer number of units.
pub fn energy_cost(power_index: usize, radio: &RadioModel, energy: &EnergyModel) -> Result<u32> {
    let power = *radio.power_levels.get(power_index).ok_or_else(|| {
        Error::Config(format!(
            "power index {power_index} out of range (M = {})",
            radio.power_levels.len()
        ))
    })?;
    let units = power * radio.tx_seconds / energy.unit_joules;
    let rounded = units.round();
    if (units - rounded).abs() > UNIT_TOL * rounded.max(1.0) || rounded < 0.0 {
        return Err(Error::Config(format!(
            "power level {} mW over {} ms is {units} energy units, not an integer",
            power * 1e3,
            radio.tx_seconds * 1e3
        )));
    }
    Ok(rounded as u32)
}

/// Battery level at the start of the next slot.
///
/// Harvested energy is credited at the slot boundary and clamped to capacity.
#[inline]
pub fn battery_next(b: u32, cost: u32, harvested: bool, b_max: u32, e_h: u32) -> u32 {
    assert!(cost <= b, "energy cost {cost} exceeds battery level {b}");
    let left = b - cost;
    if harvested {
        (left + e_h).min(b_max)
    } else {
        left
    }
}

/// Gains for one slot, ordered SD, SE, DD, DE.
pub type Gains = [f64; LINKS];

/// SINR at the destination and at the eavesdropper.
#[inline]
pub fn sinr_pair(gains: &Gains, p_s: f64, p_d: f64, radio: &RadioModel) -> (f64, f64) {
    let noise = radio.noise_power();
    let [g_sd, g_se, g_dd, g_de] = *gains;
    let dest = g_sd * p_s / (radio.alpha * p_d * g_dd + noise);
    let eve = g_se * p_s / (p_d * g_de + noise);
    (dest, eve)
}

/// Secure bits delivered in one slot: the non-negative secrecy rate times
/// the transmission time.
#[inline]
pub fn secrecy_reward(gains: &Gains, p_s: f64, p_d: f64, radio: &RadioModel) -> f64 {
    let (dest, eve) = sinr_pair(gains, p_s, p_d, radio);
    let rate = radio.bandwidth_hz * ((1.0 + dest).log2() - (1.0 + eve).log2());
    rate.max(0.0) * radio.tx_seconds
}

/// A validated channel/energy/radio triple with cached per-level costs.
///
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub channel: ChannelModel,
    pub energy: EnergyModel,
    pub radio: RadioModel,
    costs: Vec<u32>,
}

impl SystemModel {
    pub fn new(channel: ChannelModel, energy: EnergyModel, radio: RadioModel) -> Result<Self> {
        channel.validate()?;
        energy.validate()?;
        radio.validate()?;
        let costs = (0..radio.power_levels.len())
            .map(|i| energy_cost(i, &radio, &energy))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            channel,
            energy,
            radio,
            costs,
        })
    }

    /// Energy cost of every power level, in units.
    pub fn costs(&self) -> &[u32] {
        &self.costs
    }

    pub fn cost(&self, power_index: usize) -> u32 {
        self.costs[power_index]
    }

    pub fn num_power_levels(&self) -> usize {
        self.costs.len()
    }

    pub fn num_levels(&self) -> usize {
        self.channel.num_levels()
    }

    pub fn gains(&self, levels: [usize; LINKS]) -> Gains {
        levels.map(|i| self.channel.levels[i])
    }

    pub fn reward(&self, levels: [usize; LINKS], source: usize, dest: usize) -> f64 {
        secrecy_reward(
            &self.gains(levels),
            self.radio.power_levels[source],
            self.radio.power_levels[dest],
            &self.radio,
        )
    }
}

impl Default for SystemModel {
    fn default() -> Self {
        Self::new(
            ChannelModel::default(),
            EnergyModel::default(),
            RadioModel::default(),
        )
        .expect("default model is valid")
    }
}
