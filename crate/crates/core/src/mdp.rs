//! Finite MDP over quantized channels and integer battery levels.
//!
//! States are `(gSD, gSE, gDD, gDE, bS, bD)` packed into a mixed-radix index
//! (most significant first, in that order). Actions are pairs of power-level
//! indices packed as `source * M + dest`. The transition kernel is stored
//! sparse, one row per feasible state/action pair, with successor
//! probabilities aggregated over harvest outcomes that land on the same state.

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{battery_next, SystemModel, LINKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SystemState {
    /// Channel level indices, ordered SD, SE, DD, DE.
    pub gains: [usize; LINKS],
    pub b_source: u32,
    pub b_dest: u32,
}

impl SystemState {
    pub fn new(gains: [usize; LINKS], b_source: u32, b_dest: u32) -> Self {
        Self {
            gains,
            b_source,
            b_dest,
        }
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.gains;
        write!(f, "({a},{b},{c},{d},{},{})", self.b_source, self.b_dest)
    }
}

/// Source transmit and destination jamming power-level indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub source: usize,
    pub dest: usize,
}

impl Action {
    pub const SILENT: Action = Action { source: 0, dest: 0 };

    pub fn new(source: usize, dest: usize) -> Self {
        Self { source, dest }
    }

    pub fn index(self, num_power_levels: usize) -> usize {
        self.source * num_power_levels + self.dest
    }

    pub fn from_index(index: usize, num_power_levels: usize) -> Self {
        Self {
            source: index / num_power_levels,
            dest: index % num_power_levels,
        }
    }
}

/// Dimensions of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub levels: usize,
    pub b_max_source: u32,
    pub b_max_dest: u32,
}

impl StateSpace {
    pub fn num_states(&self) -> usize {
        self.num_gain_states() * self.num_battery_states()
    }

    pub fn num_gain_states(&self) -> usize {
        self.levels.pow(LINKS as u32)
    }

    pub fn num_battery_states(&self) -> usize {
        (self.b_max_source as usize + 1) * (self.b_max_dest as usize + 1)
    }

    pub fn gain_index(&self, gains: &[usize; LINKS]) -> usize {
        gains.iter().fold(0, |acc, &g| acc * self.levels + g)
    }

    pub fn gains_from_index(&self, mut index: usize) -> [usize; LINKS] {
        let mut gains = [0; LINKS];
        for g in gains.iter_mut().rev() {
            *g = index % self.levels;
            index /= self.levels;
        }
        gains
    }

    /// Packs the state; out-of-range components are an error.
    pub fn index(&self, s: &SystemState) -> Result<usize> {
        if let Some(g) = s.gains.iter().find(|&&g| g >= self.levels) {
            return Err(Error::StateOutOfRange(format!(
                "gain level {g} >= L = {}",
                self.levels
            )));
        }
        if s.b_source > self.b_max_source || s.b_dest > self.b_max_dest {
            return Err(Error::StateOutOfRange(format!(
                "battery levels ({}, {}) exceed capacities ({}, {})",
                s.b_source, s.b_dest, self.b_max_source, self.b_max_dest
            )));
        }
        Ok(self.index_unchecked(s))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, s: &SystemState) -> usize {
        self.compose(self.gain_index(&s.gains), s.b_source, s.b_dest)
    }

    #[inline]
    pub(crate) fn compose(&self, gain_index: usize, b_source: u32, b_dest: u32) -> usize {
        (gain_index * (self.b_max_source as usize + 1) + b_source as usize)
            * (self.b_max_dest as usize + 1)
            + b_dest as usize
    }

    pub fn state(&self, index: usize) -> Result<SystemState> {
        if index >= self.num_states() {
            return Err(Error::StateOutOfRange(format!(
                "state index {index} >= N_S = {}",
                self.num_states()
            )));
        }
        let rd = self.b_max_dest as usize + 1;
        let rs = self.b_max_source as usize + 1;
        let b_dest = (index % rd) as u32;
        let rest = index / rd;
        let b_source = (rest % rs) as u32;
        let gains = self.gains_from_index(rest / rs);
        Ok(SystemState {
            gains,
            b_source,
            b_dest,
        })
    }
}

impl fmt::Display for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L={} bMaxS={} bMaxD={}",
            self.levels, self.b_max_source, self.b_max_dest
        )
    }
}

/// How a node is powered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supply {
    /// Battery refilled by Bernoulli harvesting; power is a decision variable.
    Harvesting,
    /// Grid-powered node transmitting at a fixed level every slot. Its
    /// battery component is pinned to 0 and never debited.
    Mains { power_index: usize },
}

/// The decision problem: a physical model plus which nodes are optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub model: SystemModel,
    pub source: Supply,
    pub dest: Supply,
}

impl Mdp {
    /// Both nodes harvest and both powers are optimized.
    pub fn joint(model: SystemModel) -> Self {
        Self {
            model,
            source: Supply::Harvesting,
            dest: Supply::Harvesting,
        }
    }

    pub fn space(&self) -> StateSpace {
        let cap = |supply: Supply, b_max: u32| match supply {
            Supply::Harvesting => b_max,
            Supply::Mains { .. } => 0,
        };
        StateSpace {
            levels: self.model.num_levels(),
            b_max_source: cap(self.source, self.model.energy.b_max_source),
            b_max_dest: cap(self.dest, self.model.energy.b_max_dest),
        }
    }

    pub fn num_power_levels(&self) -> usize {
        self.model.num_power_levels()
    }

    /// Size of the action index space (`M^2`, whatever the supplies).
    pub fn num_actions(&self) -> usize {
        self.num_power_levels().pow(2)
    }

    /// Conventional starting state: best channel level on every link and
    /// full batteries.
    pub fn initial_state(&self) -> SystemState {
        let space = self.space();
        SystemState {
            gains: [space.levels - 1; LINKS],
            b_source: space.b_max_source,
            b_dest: space.b_max_dest,
        }
    }

    fn node_levels(&self, supply: Supply, battery: u32) -> Vec<usize> {
        match supply {
            Supply::Harvesting => (0..self.num_power_levels())
                .filter(|&i| self.model.cost(i) <= battery)
                .collect(),
            Supply::Mains { power_index } => vec![power_index],
        }
    }

    /// Feasible actions in ascending `(source, dest)` order. Never empty.
    pub fn feasible_actions(&self, s: &SystemState) -> Vec<Action> {
        let src = self.node_levels(self.source, s.b_source);
        let dst = self.node_levels(self.dest, s.b_dest);
        src.iter()
            .flat_map(|&i| dst.iter().map(move |&j| Action::new(i, j)))
            .collect()
    }

    pub fn is_feasible(&self, s: &SystemState, a: Action) -> bool {
        let ok = |supply: Supply, level: usize, battery: u32| match supply {
            Supply::Harvesting => {
                level < self.num_power_levels() && self.model.cost(level) <= battery
            }
            Supply::Mains { power_index } => level == power_index,
        };
        ok(self.source, a.source, s.b_source) && ok(self.dest, a.dest, s.b_dest)
    }

    /// Energy debited from each battery when `a` is taken: mains nodes pay
    /// nothing from the battery.
    pub fn battery_debit(&self, a: Action) -> (u32, u32) {
        let debit = |supply: Supply, level: usize| match supply {
            Supply::Harvesting => self.model.cost(level),
            Supply::Mains { .. } => 0,
        };
        (debit(self.source, a.source), debit(self.dest, a.dest))
    }

    /// Energy radiated by both nodes when `a` is taken (battery or not).
    pub fn radiated_energy(&self, a: Action) -> u32 {
        self.model.cost(a.source) + self.model.cost(a.dest)
    }

    /// Battery outcomes of one node as `(next level, probability)` for the
    /// harvest and no-harvest branches (zero-probability branches dropped).
    fn battery_outcomes(&self, supply: Supply, b: u32, cost: u32, p: f64, b_max: u32) -> Vec<(u32, f64)> {
        match supply {
            Supply::Mains { .. } => vec![(0, 1.0)],
            Supply::Harvesting => {
                let e_h = self.model.energy.harvest_units;
                [(true, p), (false, 1.0 - p)]
                    .into_iter()
                    .filter(|&(_, w)| w > 0.0)
                    .map(|(h, w)| (battery_next(b, cost, h, b_max, e_h), w))
                    .collect()
            }
        }
    }
}

/// Immediate reward for every gain tuple and every action index, feasible or
/// not. Rewards depend only on gains and powers.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn new(mdp: &Mdp) -> Self {
        let space = mdp.space();
        let m = mdp.num_power_levels();
        let num_actions = m * m;
        let mut values = Vec::with_capacity(space.num_gain_states() * num_actions);
        for g in 0..space.num_gain_states() {
            let levels = space.gains_from_index(g);
            for a in 0..num_actions {
                let a = Action::from_index(a, m);
                values.push(mdp.model.reward(levels, a.source, a.dest));
            }
        }
        Self {
            num_actions,
            values,
        }
    }

    #[inline]
    pub fn get(&self, gain_index: usize, action_index: usize) -> f64 {
        self.values[gain_index * self.num_actions + action_index]
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|r| *r *= c);
    }
}

/// `(action index, reward, [(next state, probability)])` for [`Kernel::from_rows`].
pub type ExplicitAction = (usize, f64, Vec<(usize, f64)>);

/// Sparse transition kernel and reward table.
///
/// Rows are laid out state-major: the feasible actions of state `s` occupy
/// slots `action_start[s]..action_start[s + 1]`, in ascending action index.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    space: StateSpace,
    num_power_levels: usize,
    action_start: Vec<usize>,
    actions: Vec<u32>,
    rewards: Vec<f64>,
    succ_start: Vec<usize>,
    next: Vec<u32>,
    prob: Vec<f64>,
    table: RewardTable,
}

struct StateRows {
    actions: Vec<u32>,
    rewards: Vec<f64>,
    lens: Vec<usize>,
    next: Vec<u32>,
    prob: Vec<f64>,
}

/// Joint next-gain distribution for one gain tuple: product of the four
/// per-link rows, zero entries dropped.
fn channel_successors(mdp: &Mdp, space: &StateSpace, gains: &[usize; LINKS]) -> Vec<(usize, f64)> {
    let l = space.levels;
    let ch = &mdp.model.channel;
    let mut out = Vec::new();
    for next in 0..space.num_gain_states() {
        let ng = space.gains_from_index(next);
        let mut p = 1.0;
        for link in 0..LINKS {
            p *= ch.prob(link, gains[link], ng[link]);
            if p == 0.0 {
                break;
            }
        }
        if p > 0.0 {
            out.push((next, p));
        }
    }
    debug_assert!(out.len() <= l.pow(LINKS as u32));
    out
}

impl Kernel {
    /// Exact kernel for `mdp` using the default execution strategy.
    pub fn build(mdp: &Mdp) -> Self {
        Self::build_with(mdp, Exec::default())
    }

    pub fn build_with(mdp: &Mdp, exec: Exec) -> Self {
        let space = mdp.space();
        let m = mdp.num_power_levels();
        let table = RewardTable::new(mdp);
        let chan: Vec<Vec<(usize, f64)>> = (0..space.num_gain_states())
            .map(|g| channel_successors(mdp, &space, &space.gains_from_index(g)))
            .collect();
        let energy = &mdp.model.energy;

        let per_state = exec.map_range(space.num_states(), |si| {
            let s = space.state(si).expect("index in range");
            let g = space.gain_index(&s.gains);
            let mut rows = StateRows {
                actions: Vec::new(),
                rewards: Vec::new(),
                lens: Vec::new(),
                next: Vec::new(),
                prob: Vec::new(),
            };
            let mut outcomes: Vec<(u32, f64)> = Vec::new();
            for a in mdp.feasible_actions(&s) {
                let ai = a.index(m);
                let (cost_s, cost_d) = mdp.battery_debit(a);
                let bs = mdp.battery_outcomes(mdp.source, s.b_source, cost_s, energy.p_source, space.b_max_source);
                let bd = mdp.battery_outcomes(mdp.dest, s.b_dest, cost_d, energy.p_dest, space.b_max_dest);
                outcomes.clear();
                for &(ng, pg) in &chan[g] {
                    for &(nbs, ps) in &bs {
                        for &(nbd, pd) in &bd {
                            let idx = space.compose(ng, nbs, nbd) as u32;
                            outcomes.push((idx, pg * ps * pd));
                        }
                    }
                }
                outcomes.sort_by_key(|&(idx, _)| idx);
                let before = rows.next.len();
                for &(idx, p) in &outcomes {
                    if rows.next.len() > before && *rows.next.last().unwrap() == idx {
                        *rows.prob.last_mut().unwrap() += p;
                    } else {
                        rows.next.push(idx);
                        rows.prob.push(p);
                    }
                }
                rows.lens.push(rows.next.len() - before);
                rows.actions.push(ai as u32);
                rows.rewards.push(table.get(g, ai));
            }
            rows
        });

        let mut action_start = Vec::with_capacity(space.num_states() + 1);
        let mut succ_start = vec![0];
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut next = Vec::new();
        let mut prob = Vec::new();
        action_start.push(0);
        for rows in per_state {
            for len in rows.lens {
                succ_start.push(succ_start.last().unwrap() + len);
            }
            actions.extend(rows.actions);
            rewards.extend(rows.rewards);
            next.extend(rows.next);
            prob.extend(rows.prob);
            action_start.push(actions.len());
        }
        Self {
            space,
            num_power_levels: m,
            action_start,
            actions,
            rewards,
            succ_start,
            next,
            prob,
            table,
        }
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.num_states()
    }

    pub fn num_power_levels(&self) -> usize {
        self.num_power_levels
    }

    pub fn num_actions(&self) -> usize {
        self.num_power_levels * self.num_power_levels
    }

    /// Slot range holding the feasible actions of state `s`.
    #[inline]
    pub fn slots(&self, s: usize) -> Range<usize> {
        self.action_start[s]..self.action_start[s + 1]
    }

    #[inline]
    pub fn action_at(&self, slot: usize) -> usize {
        self.actions[slot] as usize
    }

    #[inline]
    pub fn reward_at(&self, slot: usize) -> f64 {
        self.rewards[slot]
    }

    #[inline]
    pub fn successors(&self, slot: usize) -> (&[u32], &[f64]) {
        let r = self.succ_start[slot]..self.succ_start[slot + 1];
        (&self.next[r.clone()], &self.prob[r])
    }

    /// Slot of `(s, a)`, or `None` when `a` is infeasible in `s`.
    pub fn slot_of(&self, s: usize, action: usize) -> Option<usize> {
        let r = self.slots(s);
        self.actions[r.clone()]
            .binary_search(&(action as u32))
            .ok()
            .map(|k| r.start + k)
    }

    /// Feasible action indices of state `s`, ascending.
    pub fn actions_of(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.actions[self.slots(s)].iter().map(|&a| a as usize)
    }

    /// Immediate reward of `(s, a)`; panics when `a` is infeasible.
    pub fn reward(&self, s: usize, action: usize) -> f64 {
        let slot = self
            .slot_of(s, action)
            .unwrap_or_else(|| panic!("action {action} is infeasible in state {s}"));
        self.rewards[slot]
    }

    pub fn reward_table(&self) -> &RewardTable {
        &self.table
    }

    /// `R + gamma * sum P v` for one slot.
    #[inline]
    pub fn backup(&self, slot: usize, v: &[f64], gamma: f64) -> f64 {
        let (next, prob) = self.successors(slot);
        let future: f64 = next
            .iter()
            .zip(prob)
            .map(|(&n, &p)| p * v[n as usize])
            .sum();
        self.rewards[slot] + gamma * future
    }

    /// Copy with every reward multiplied by `c`.
    pub fn with_scaled_rewards(&self, c: f64) -> Self {
        let mut k = self.clone();
        k.rewards.iter_mut().for_each(|r| *r *= c);
        k.table.scale(c);
        k
    }

    /// Number of stored successor entries across all rows.
    pub fn num_entries(&self) -> usize {
        self.next.len()
    }

    /// Kernel assembled from explicit rows; used for small hand-built MDPs.
    ///
    /// `rows[s]` lists `(action index, reward, successors)` with actions in
    /// ascending order.
    pub fn from_rows(
        num_power_levels: usize,
        rows: Vec<Vec<ExplicitAction>>,
    ) -> Self {
        let n = rows.len();
        let space = StateSpace {
            levels: 1,
            b_max_source: 0,
            b_max_dest: n as u32 - 1,
        };
        let mut k = Kernel {
            space,
            num_power_levels,
            action_start: vec![0],
            actions: Vec::new(),
            rewards: Vec::new(),
            succ_start: vec![0],
            next: Vec::new(),
            prob: Vec::new(),
            table: RewardTable {
                num_actions: num_power_levels * num_power_levels,
                values: vec![0.0; num_power_levels * num_power_levels],
            },
        };
        for state_rows in rows {
            assert!(
                state_rows.windows(2).all(|w| w[0].0 < w[1].0),
                "actions must be strictly ascending"
            );
            for (a, r, succ) in state_rows {
                k.actions.push(a as u32);
                k.rewards.push(r);
                for (s2, p) in succ {
                    assert!(s2 < n, "successor {s2} out of range");
                    k.next.push(s2 as u32);
                    k.prob.push(p);
                }
                k.succ_start.push(k.next.len());
            }
            k.action_start.push(k.actions.len());
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelModel, EnergyModel, RadioModel};
    use std::collections::BTreeMap;

    fn reference() -> Mdp {
        Mdp::joint(SystemModel::default())
    }

    #[test]
    fn index_examples() {
        let space = reference().space();
        assert_eq!(space.num_states(), 576);
        assert_eq!(space.index(&SystemState::new([0; 4], 0, 0)).unwrap(), 0);
        assert_eq!(space.index(&SystemState::new([1; 4], 5, 5)).unwrap(), 575);
        assert_eq!(space.index(&SystemState::new([1, 0, 0, 0], 0, 0)).unwrap(), 8 * 36);
    }

    #[test]
    fn index_round_trip_all_states() {
        let space = reference().space();
        for i in 0..space.num_states() {
            let s = space.state(i).unwrap();
            assert_eq!(space.index(&s).unwrap(), i);
        }
        assert!(space.state(576).is_err());
    }

    #[test]
    fn out_of_range_components() {
        let space = reference().space();
        assert!(space.index(&SystemState::new([2, 0, 0, 0], 0, 0)).is_err());
        assert!(space.index(&SystemState::new([0; 4], 6, 0)).is_err());
        assert!(space.index(&SystemState::new([0; 4], 0, 6)).is_err());
    }

    #[test]
    fn feasible_action_examples() {
        let mdp = reference();
        let acts = |bs, bd| mdp.feasible_actions(&SystemState::new([0; 4], bs, bd));
        assert_eq!(acts(0, 0), vec![Action::SILENT]);
        assert_eq!(acts(5, 5).len(), 16);
        let a = acts(1, 2);
        let expected: Vec<Action> = (0..2)
            .flat_map(|i| (0..3).map(move |j| Action::new(i, j)))
            .collect();
        assert_eq!(a, expected);
    }

    #[test]
    fn feasible_sets_match_brute_force() {
        let mdp = reference();
        let space = mdp.space();
        let costs = [0u32, 1, 2, 4];
        for i in 0..space.num_states() {
            let s = space.state(i).unwrap();
            let mut brute = Vec::new();
            for a in 0..4 {
                for b in 0..4 {
                    if costs[a] <= s.b_source && costs[b] <= s.b_dest {
                        brute.push(Action::new(a, b));
                    }
                }
            }
            assert_eq!(mdp.feasible_actions(&s), brute);
        }
    }

    fn battery_marginal(k: &Kernel, s: usize, a: usize) -> BTreeMap<u32, f64> {
        let space = k.space();
        let slot = k.slot_of(s, a).unwrap();
        let (next, prob) = k.successors(slot);
        let mut out = BTreeMap::new();
        for (&n, &p) in next.iter().zip(prob) {
            *out.entry(space.state(n as usize).unwrap().b_source).or_insert(0.0) += p;
        }
        out
    }

    #[test]
    fn source_battery_marginal_example() {
        let mdp = reference();
        let k = Kernel::build(&mdp);
        let s = k.space().index(&SystemState::new([1; 4], 5, 5)).unwrap();
        let a = Action::new(3, 0).index(4);
        let marg = battery_marginal(&k, s, a);
        assert_eq!(marg.len(), 2);
        assert!((marg[&3] - 0.8).abs() < 1e-12);
        assert!((marg[&1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn full_battery_idle_aggregates_to_capacity() {
        for p in [0.0, 0.3, 1.0] {
            let model = SystemModel::new(
                ChannelModel::default(),
                EnergyModel { p_source: p, ..EnergyModel::default() },
                RadioModel::default(),
            )
            .unwrap();
            let k = Kernel::build(&Mdp::joint(model));
            let s = k.space().index(&SystemState::new([0; 4], 5, 5)).unwrap();
            let marg = battery_marginal(&k, s, 0);
            assert_eq!(marg.len(), 1);
            assert!((marg[&5] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_chain_has_single_successors() {
        let model = SystemModel::new(
            ChannelModel::shared(vec![1.655e-13, 3.311e-13], vec![1.0, 0.0, 0.0, 1.0]),
            EnergyModel { p_source: 1.0, p_dest: 1.0, ..EnergyModel::default() },
            RadioModel::default(),
        )
        .unwrap();
        let k = Kernel::build(&Mdp::joint(model));
        for s in 0..k.num_states() {
            for slot in k.slots(s) {
                let (next, prob) = k.successors(slot);
                assert_eq!(next.len(), 1);
                assert_eq!(prob[0], 1.0);
            }
        }
    }

    #[test]
    fn rows_are_stochastic_and_in_bounds() {
        let k = Kernel::build(&reference());
        let space = k.space();
        for s in 0..k.num_states() {
            assert!(!k.slots(s).is_empty());
            for slot in k.slots(s) {
                let (next, prob) = k.successors(slot);
                let sum: f64 = prob.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(prob.iter().all(|&p| p > 0.0 && p <= 1.0));
                assert!(next.windows(2).all(|w| w[0] < w[1]));
                for &n in next {
                    let t = space.state(n as usize).unwrap();
                    assert!(t.b_source <= 5 && t.b_dest <= 5);
                }
            }
        }
    }

    #[test]
    fn parallel_and_sequential_kernels_are_identical() {
        let mdp = reference();
        assert_eq!(
            Kernel::build_with(&mdp, Exec::Sequential),
            Kernel::build_with(&mdp, Exec::Parallel)
        );
    }

    #[test]
    fn infeasible_queries_have_no_row() {
        let k = Kernel::build(&reference());
        let s = k.space().index(&SystemState::new([0; 4], 0, 0)).unwrap();
        assert_eq!(k.slot_of(s, 0), Some(k.slots(s).start));
        assert_eq!(k.slot_of(s, 5), None);
    }

    #[test]
    #[should_panic(expected = "infeasible")]
    fn infeasible_reward_query_panics() {
        let k = Kernel::build(&reference());
        k.reward(0, 15);
    }
}
