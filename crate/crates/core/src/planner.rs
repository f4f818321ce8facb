//! Policy iteration over a sparse kernel.
//!
//! Evaluation is Gauss–Seidel: one value table updated in place, states
//! visited in ascending index order, until the largest per-sweep change drops
//! below `epsilon`. Improvement takes the argmax of the one-step lookahead
//! with ties going to the lowest action index. Planning starts from `v = 0`
//! and the all-silent policy, so results are reproducible bit for bit.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{Action, Kernel, StateSpace};

/// Stopping threshold for policy evaluation used unless configured.
pub const DEFAULT_EPSILON: f64 = 0.07;

/// Hard cap on improvement rounds; unreachable on well-posed inputs.
const MAX_IMPROVEMENTS: usize = 100_000;

/// A state-to-action look-up table.
///
/// A reduced-state policy covers only its planned subset; every other state
/// maps to `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    space: StateSpace,
    num_power_levels: usize,
    gamma: f64,
    actions: Vec<Option<u32>>,
}

impl Policy {
    pub fn new(space: StateSpace, num_power_levels: usize, gamma: f64, actions: Vec<Option<u32>>) -> Self {
        assert_eq!(actions.len(), space.num_states());
        Self {
            space,
            num_power_levels,
            gamma,
            actions,
        }
    }

    /// The all-silent policy over every state.
    pub fn silent(kernel: &Kernel, gamma: f64) -> Self {
        Self::new(
            kernel.space(),
            kernel.num_power_levels(),
            gamma,
            vec![Some(0); kernel.num_states()],
        )
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn num_power_levels(&self) -> usize {
        self.num_power_levels
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn action_index(&self, s: usize) -> Option<usize> {
        self.actions.get(s).copied().flatten().map(|a| a as usize)
    }

    pub fn action(&self, s: usize) -> Option<Action> {
        self.action_index(s)
            .map(|a| Action::from_index(a, self.num_power_levels))
    }

    pub fn is_planned(&self, s: usize) -> bool {
        self.action_index(s).is_some()
    }

    pub fn planned_count(&self) -> usize {
        self.actions.iter().filter(|a| a.is_some()).count()
    }

    /// `(state, action index)` for every planned state, ascending.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .filter_map(|(s, a)| a.map(|a| (s, a as usize)))
    }

    /// Checks that every planned action is feasible under `kernel`.
    pub fn check_feasible(&self, kernel: &Kernel) -> Result<()> {
        if kernel.space() != self.space || kernel.num_power_levels() != self.num_power_levels {
            return Err(Error::DimensionMismatch {
                expected: kernel.space().to_string(),
                found: self.space.to_string(),
            });
        }
        for (s, a) in self.entries() {
            if kernel.slot_of(s, a).is_none() {
                return Err(Error::PolicyFormat(format!(
                    "action {a} is infeasible in state {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Expected discounted secure bits per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Output of a planning run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub policy: Policy,
    pub values: ValueTable,
    /// Number of evaluation/improvement rounds until the policy was stable.
    pub iterations: usize,
    /// Total evaluation sweeps across all rounds.
    pub sweeps: usize,
}

fn slots_for(kernel: &Kernel, policy: &Policy, states: &[usize]) -> Vec<usize> {
    states
        .iter()
        .map(|&s| {
            let a = policy
                .action_index(s)
                .unwrap_or_else(|| panic!("policy does not cover state {s}"));
            kernel
                .slot_of(s, a)
                .unwrap_or_else(|| panic!("action {a} infeasible in state {s}"))
        })
        .collect()
}

/// In-place sweeps over `states`; entries of `v` outside `states` are read
/// but never written. Returns the number of sweeps.
fn evaluate(kernel: &Kernel, states: &[usize], slots: &[usize], v: &mut [f64], gamma: f64, epsilon: f64) -> usize {
    let mut sweeps = 0;
    loop {
        let mut delta: f64 = 0.0;
        for (&s, &slot) in states.iter().zip(slots) {
            let old = v[s];
            let new = kernel.backup(slot, v, gamma);
            v[s] = new;
            delta = delta.max((old - new).abs());
        }
        sweeps += 1;
        if delta < epsilon {
            return sweeps;
        }
    }
}

/// Lowest-index argmax of the one-step lookahead at state `s`.
#[inline]
fn best_slot(kernel: &Kernel, s: usize, v: &[f64], gamma: f64) -> usize {
    let mut slots = kernel.slots(s);
    let first = slots.next().expect("every state has a feasible action");
    let mut best = (first, kernel.backup(first, v, gamma));
    for slot in slots {
        let q = kernel.backup(slot, v, gamma);
        if q > best.1 {
            best = (slot, q);
        }
    }
    best.0
}

/// Evaluates a policy that covers every state.
pub fn policy_evaluation(kernel: &Kernel, policy: &Policy, v0: ValueTable, gamma: f64, epsilon: f64) -> ValueTable {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let states: Vec<usize> = (0..kernel.num_states()).collect();
    let slots = slots_for(kernel, policy, &states);
    let mut v = v0.0;
    evaluate(kernel, &states, &slots, &mut v, gamma, epsilon);
    ValueTable(v)
}

/// Greedy policy with respect to `v`; `stable` is true iff it equals `current`.
pub fn policy_improvement(kernel: &Kernel, v: &ValueTable, gamma: f64, current: &Policy) -> (Policy, bool) {
    let mut next = current.clone();
    let mut stable = true;
    for s in 0..kernel.num_states() {
        let a = kernel.action_at(best_slot(kernel, s, &v.0, gamma)) as u32;
        if next.actions[s] != Some(a) {
            stable = false;
            next.actions[s] = Some(a);
        }
    }
    (next, stable)
}

/// Policy iteration over the states in `states` (ascending). Values of
/// states outside the list stay at whatever `v` holds.
fn iterate(kernel: &Kernel, states: &[usize], v: &mut [f64], gamma: f64, epsilon: f64) -> (Vec<u32>, usize, usize) {
    let mut slots: Vec<usize> = states.iter().map(|&s| kernel.slots(s).start).collect();
    let mut iterations = 0;
    let mut sweeps = 0;
    loop {
        sweeps += evaluate(kernel, states, &slots, v, gamma, epsilon);
        iterations += 1;
        let mut stable = true;
        for (&s, slot) in states.iter().zip(slots.iter_mut()) {
            let best = best_slot(kernel, s, v, gamma);
            if best != *slot {
                *slot = best;
                stable = false;
            }
        }
        if stable || iterations >= MAX_IMPROVEMENTS {
            break;
        }
    }
    let actions = slots.iter().map(|&slot| kernel.action_at(slot) as u32).collect();
    (actions, iterations, sweeps)
}

fn check_args(gamma: f64, epsilon: f64) {
    assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
    assert!(epsilon > 0.0, "epsilon must be positive");
}

/// Optimal stationary deterministic policy and its value table.
pub fn policy_iteration(kernel: &Kernel, gamma: f64, epsilon: f64) -> Plan {
    check_args(gamma, epsilon);
    let states: Vec<usize> = (0..kernel.num_states()).collect();
    let mut v = vec![0.0; kernel.num_states()];
    let (actions, iterations, sweeps) = iterate(kernel, &states, &mut v, gamma, epsilon);
    Plan {
        policy: Policy::new(
            kernel.space(),
            kernel.num_power_levels(),
            gamma,
            actions.into_iter().map(Some).collect(),
        ),
        values: ValueTable(v),
        iterations,
        sweeps,
    }
}

/// Bellman fixed point by synchronous value iteration from `v = 0`.
///
/// Independent of the policy-iteration path; used as a reference solution.
pub fn value_iteration_oracle(kernel: &Kernel, gamma: f64, tolerance: f64) -> ValueTable {
    check_args(gamma, tolerance);
    let n = kernel.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    loop {
        let mut delta: f64 = 0.0;
        for (s, out) in next.iter_mut().enumerate() {
            let q = kernel
                .slots(s)
                .map(|slot| kernel.backup(slot, &v, gamma))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((q - v[s]).abs());
            *out = q;
        }
        std::mem::swap(&mut v, &mut next);
        if delta < tolerance {
            return ValueTable(v);
        }
    }
}

/// Lowest-index argmax policy with respect to `v`.
pub fn greedy_policy(kernel: &Kernel, v: &ValueTable, gamma: f64) -> Policy {
    let actions = (0..kernel.num_states())
        .map(|s| Some(kernel.action_at(best_slot(kernel, s, &v.0, gamma)) as u32))
        .collect();
    Policy::new(kernel.space(), kernel.num_power_levels(), gamma, actions)
}

/// `max_s |v(s) - (R(s, d(s)) + gamma * sum P v)|` over the planned states.
pub fn bellman_residual(kernel: &Kernel, policy: &Policy, v: &ValueTable, gamma: f64) -> f64 {
    policy
        .entries()
        .map(|(s, a)| {
            let slot = kernel.slot_of(s, a).expect("feasible policy");
            (v.0[s] - kernel.backup(slot, &v.0, gamma)).abs()
        })
        .fold(0.0, f64::max)
}

/// Value assumed for successors outside a reduced-state subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bootstrap {
    #[default]
    Zero,
    /// Best immediate reward of the out-of-subset state.
    GreedyReward,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReducedOptions {
    /// State index always placed in the subset.
    pub force_include: Option<usize>,
    pub bootstrap: Bootstrap,
}

/// Draws `ceil(fraction * N_S)` distinct states uniformly without
/// replacement, returned ascending.
pub fn sample_subset<R: Rng + ?Sized>(num_states: usize, fraction: f64, force_include: Option<usize>, rng: &mut R) -> Vec<usize> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
    let size = ((fraction * num_states as f64).ceil() as usize).clamp(1, num_states);
    let mut subset: Vec<usize> = match force_include {
        None => sample(rng, num_states, size).into_vec(),
        Some(f) => {
            assert!(f < num_states);
            let mut rest: Vec<usize> = sample(rng, num_states - 1, size - 1)
                .into_iter()
                .map(|i| if i >= f { i + 1 } else { i })
                .collect();
            rest.push(f);
            rest
        }
    };
    subset.sort_unstable();
    subset
}

/// Policy iteration restricted to a random subset of states.
///
/// Returns a policy covering only the subset, plus the value table (with
/// bootstrap values at out-of-subset states).
pub fn reduced_state_plan<R: Rng + ?Sized>(
    kernel: &Kernel,
    gamma: f64,
    epsilon: f64,
    fraction: f64,
    rng: &mut R,
    opts: ReducedOptions,
) -> Plan {
    check_args(gamma, epsilon);
    let n = kernel.num_states();
    let subset = sample_subset(n, fraction, opts.force_include, rng);
    let mut v = vec![0.0; n];
    if opts.bootstrap == Bootstrap::GreedyReward {
        let mut inside = vec![false; n];
        subset.iter().for_each(|&s| inside[s] = true);
        for (s, value) in v.iter_mut().enumerate() {
            if !inside[s] {
                *value = kernel
                    .slots(s)
                    .map(|slot| kernel.reward_at(slot))
                    .fold(0.0, f64::max);
            }
        }
    }
    let (chosen, iterations, sweeps) = iterate(kernel, &subset, &mut v, gamma, epsilon);
    let mut actions = vec![None; n];
    for (&s, a) in subset.iter().zip(chosen) {
        actions[s] = Some(a);
    }
    Plan {
        policy: Policy::new(kernel.space(), kernel.num_power_levels(), gamma, actions),
        values: ValueTable(v),
        iterations,
        sweeps,
    }
}
