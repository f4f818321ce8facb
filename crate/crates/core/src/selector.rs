//! Runtime action selectors for every allocation algorithm.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mdp::{Action, Mdp, RewardTable, StateSpace, Supply, SystemState};
use crate::model::SystemModel;
use crate::planner::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Optimal joint allocation: full policy-iteration look-up table.
    Ojpa,
    /// Reduced-state joint allocation: look-up on a random subset, greedy elsewhere.
    Rsjpa,
    /// Greedy: best immediate reward.
    Ga,
    /// Naive: spend as much stored energy as the power levels allow.
    Na,
    /// Transmit power optimized, jammer mains-powered at a fixed level.
    Itpa,
    /// Jamming power optimized, source mains-powered at a fixed level.
    Ijpa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Ojpa,
        Algorithm::Rsjpa,
        Algorithm::Ga,
        Algorithm::Na,
        Algorithm::Itpa,
        Algorithm::Ijpa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ojpa => "ojpa",
            Algorithm::Rsjpa => "rsjpa",
            Algorithm::Ga => "ga",
            Algorithm::Na => "na",
            Algorithm::Itpa => "itpa",
            Algorithm::Ijpa => "ijpa",
        }
    }

    /// Whether the algorithm needs a planning phase.
    pub fn plans(self) -> bool {
        !matches!(self, Algorithm::Ga | Algorithm::Na)
    }

    /// The decision problem this algorithm plans and runs on.
    pub fn mdp(self, model: SystemModel, fixed_power_index: usize) -> Result<Mdp> {
        match self {
            Algorithm::Itpa => build_restricted_mdp(Restricted::Itpa, model, fixed_power_index),
            Algorithm::Ijpa => build_restricted_mdp(Restricted::Ijpa, model, fixed_power_index),
            _ => Ok(Mdp::joint(model)),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

/// Which node keeps its power decision in a single-node problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restricted {
    /// Optimize source power; destination jams at a fixed level from mains.
    Itpa,
    /// Optimize jamming power; source transmits at a fixed level from mains.
    Ijpa,
}

/// Single-node problem: the fixed node is mains-powered, so its battery
/// component collapses to one level and the state has five effective
/// components.
pub fn build_restricted_mdp(mode: Restricted, model: SystemModel, fixed_power_index: usize) -> Result<Mdp> {
    if fixed_power_index >= model.num_power_levels() {
        return Err(Error::Config(format!(
            "fixed power index {fixed_power_index} out of range (M = {})",
            model.num_power_levels()
        )));
    }
    let fixed = Supply::Mains {
        power_index: fixed_power_index,
    };
    Ok(match mode {
        Restricted::Itpa => Mdp {
            model,
            source: Supply::Harvesting,
            dest: fixed,
        },
        Restricted::Ijpa => Mdp {
            model,
            source: fixed,
            dest: Supply::Harvesting,
        },
    })
}

/// Stored action for `s`; errors when the policy does not cover it.
pub fn act_lookup(policy: &Policy, s: &SystemState) -> Result<Action> {
    let space: StateSpace = policy.space();
    let index = space.index(s)?;
    policy.action(index).ok_or(Error::MissingState(index))
}

/// Best immediate reward among feasible actions; ties go to the lowest total
/// energy, then to the lowest `(source, dest)`.
pub fn act_greedy(mdp: &Mdp, rewards: &RewardTable, s: &SystemState) -> Action {
    let m = mdp.num_power_levels();
    let g = mdp.space().gain_index(&s.gains);
    let mut best: Option<(Action, f64, u32)> = None;
    for a in mdp.feasible_actions(s) {
        let r = rewards.get(g, a.index(m));
        let e = mdp.radiated_energy(a);
        let better = match best {
            None => true,
            Some((_, br, be)) => r > br || (r == br && e < be),
        };
        if better {
            best = Some((a, r, e));
        }
    }
    best.expect("feasible set is never empty").0
}

/// Largest affordable power level at each node independently.
pub fn act_naive(mdp: &Mdp, s: &SystemState) -> Action {
    let top = |supply: Supply, battery: u32| match supply {
        Supply::Harvesting => mdp
            .model
            .costs()
            .iter()
            .rposition(|&c| c <= battery)
            .expect("level 0 costs nothing"),
        Supply::Mains { power_index } => power_index,
    };
    Action::new(top(mdp.source, s.b_source), top(mdp.dest, s.b_dest))
}

/// Table action for planned states, greedy action otherwise.
pub fn act_rsjpa(policy: &Policy, mdp: &Mdp, rewards: &RewardTable, s: &SystemState) -> Action {
    match act_lookup(policy, s) {
        Ok(a) => a,
        Err(_) => act_greedy(mdp, rewards, s),
    }
}

/// An action selector ready for the transmission phase.
#[derive(Debug, Clone)]
pub enum Selector {
    /// OJPA, ITPA and IJPA.
    Lookup(Policy),
    /// RSJPA.
    Hybrid(Policy),
    Greedy,
    Naive,
}

impl Selector {
    /// Pairs an algorithm with its policy; planning algorithms require one.
    pub fn for_algorithm(algorithm: Algorithm, policy: Option<Policy>) -> Result<Self> {
        match (algorithm, policy) {
            (Algorithm::Ga, _) => Ok(Selector::Greedy),
            (Algorithm::Na, _) => Ok(Selector::Naive),
            (Algorithm::Rsjpa, Some(p)) => Ok(Selector::Hybrid(p)),
            (_, Some(p)) => Ok(Selector::Lookup(p)),
            (a, None) => Err(Error::Config(format!("{a} requires a planned policy"))),
        }
    }

    pub fn select(&self, mdp: &Mdp, rewards: &RewardTable, s: &SystemState) -> Result<Action> {
        match self {
            Selector::Lookup(p) => act_lookup(p, s),
            Selector::Hybrid(p) => Ok(act_rsjpa(p, mdp, rewards, s)),
            Selector::Greedy => Ok(act_greedy(mdp, rewards, s)),
            Selector::Naive => Ok(act_naive(mdp, s)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Kernel;
    use crate::model::{ChannelModel, EnergyModel, RadioModel};
    use crate::planner::{policy_iteration, reduced_state_plan, ReducedOptions, DEFAULT_EPSILON};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn joint() -> Mdp {
        Mdp::joint(SystemModel::default())
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("dqn".parse::<Algorithm>().is_err());
    }

    #[test]
    fn naive_examples() {
        let mdp = joint();
        assert_eq!(act_naive(&mdp, &SystemState::new([0; 4], 5, 5)), Action::new(3, 3));
        assert_eq!(act_naive(&mdp, &SystemState::new([0; 4], 0, 5)).source, 0);
        assert_eq!(act_naive(&mdp, &SystemState::new([0; 4], 3, 0)), Action::new(2, 0));
    }

    #[test]
    fn greedy_empty_batteries_is_silent() {
        let mdp = joint();
        let t = RewardTable::new(&mdp);
        assert_eq!(act_greedy(&mdp, &t, &SystemState::new([1, 0, 1, 0], 0, 0)), Action::SILENT);
    }

    #[test]
    fn greedy_all_zero_rewards_prefers_no_energy() {
        // Eavesdropper link ten times stronger; jamming barely reaches it.
        let model = SystemModel::new(
            ChannelModel::shared(vec![1e-14, 1e-13], vec![0.5, 0.5, 0.5, 0.5]),
            EnergyModel::default(),
            RadioModel::default(),
        )
        .unwrap();
        let mdp = Mdp::joint(model);
        let t = RewardTable::new(&mdp);
        let s = SystemState::new([0, 1, 1, 0], 5, 5);
        let g = mdp.space().gain_index(&s.gains);
        // Brute force: every action yields zero secure bits here.
        assert!((0..16).all(|a| t.get(g, a) == 0.0));
        assert_eq!(act_greedy(&mdp, &t, &s), Action::SILENT);
    }

    #[test]
    fn greedy_monotone_case_uses_full_power() {
        let radio = RadioModel { alpha: 0.0, ..RadioModel::default() };
        let model = SystemModel::new(
            ChannelModel::shared(vec![1e-13, 1e-11], vec![0.5, 0.5, 0.5, 0.5]),
            EnergyModel::default(),
            radio,
        )
        .unwrap();
        let mdp = Mdp::joint(model);
        let t = RewardTable::new(&mdp);
        let s = SystemState::new([1, 1, 0, 1], 4, 4);
        let g = mdp.space().gain_index(&s.gains);
        let brute = mdp
            .feasible_actions(&s)
            .into_iter()
            .max_by(|a, b| t.get(g, a.index(4)).total_cmp(&t.get(g, b.index(4))))
            .unwrap();
        assert_eq!(brute, Action::new(3, 3));
        assert_eq!(act_greedy(&mdp, &t, &s), brute);
    }

    #[test]
    fn lookup_and_missing_state() {
        let mdp = joint();
        let k = Kernel::build(&mdp);
        let plan = policy_iteration(&k, 0.9, DEFAULT_EPSILON);
        let s0 = mdp.initial_state();
        let i0 = k.space().index(&s0).unwrap();
        assert_eq!(act_lookup(&plan.policy, &s0).unwrap(), plan.policy.action(i0).unwrap());
        assert_eq!(
            act_lookup(&plan.policy, &SystemState::new([0; 4], 0, 0)).unwrap(),
            Action::SILENT
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reduced = reduced_state_plan(&k, 0.9, DEFAULT_EPSILON, 0.1, &mut rng, ReducedOptions::default());
        let missing = (0..k.num_states()).find(|&s| !reduced.policy.is_planned(s)).unwrap();
        let s = k.space().state(missing).unwrap();
        assert!(matches!(act_lookup(&reduced.policy, &s), Err(Error::MissingState(i)) if i == missing));
        let t = RewardTable::new(&mdp);
        assert_eq!(act_rsjpa(&reduced.policy, &mdp, &t, &s), act_greedy(&mdp, &t, &s));
    }

    #[test]
    fn full_subset_rsjpa_matches_ojpa_everywhere() {
        let mdp = joint();
        let k = Kernel::build(&mdp);
        let t = RewardTable::new(&mdp);
        let full = policy_iteration(&k, 0.9, DEFAULT_EPSILON).policy;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reduced = reduced_state_plan(&k, 0.9, DEFAULT_EPSILON, 1.0, &mut rng, ReducedOptions::default()).policy;
        for i in 0..k.num_states() {
            let s = k.space().state(i).unwrap();
            assert_eq!(act_rsjpa(&reduced, &mdp, &t, &s), act_lookup(&full, &s).unwrap());
        }
    }

    #[test]
    fn greedy_dominates_naive_per_slot() {
        let mdp = joint();
        let t = RewardTable::new(&mdp);
        let space = mdp.space();
        for i in 0..space.num_states() {
            let s = space.state(i).unwrap();
            let g = space.gain_index(&s.gains);
            let ga = act_greedy(&mdp, &t, &s);
            let na = act_naive(&mdp, &s);
            assert!(mdp.is_feasible(&s, ga) && mdp.is_feasible(&s, na));
            assert!(t.get(g, ga.index(4)) >= t.get(g, na.index(4)));
        }
    }

    #[test]
    fn restricted_state_counts() {
        let itpa = build_restricted_mdp(Restricted::Itpa, SystemModel::default(), 1).unwrap();
        assert_eq!(itpa.space().num_states(), 96);
        let ijpa = build_restricted_mdp(Restricted::Ijpa, SystemModel::default(), 1).unwrap();
        assert_eq!(ijpa.space().num_states(), 96);
        assert!(build_restricted_mdp(Restricted::Itpa, SystemModel::default(), 4).is_err());
    }

    #[test]
    fn itpa_without_jamming_uses_plain_secrecy_rate() {
        let mdp = build_restricted_mdp(Restricted::Itpa, SystemModel::default(), 0).unwrap();
        let k = Kernel::build(&mdp);
        for i in 0..k.num_states() {
            let s = k.space().state(i).unwrap();
            for a in k.actions_of(i) {
                let act = Action::from_index(a, 4);
                assert_eq!(act.dest, 0);
                let expected = mdp.model.reward(s.gains, act.source, 0);
                assert_eq!(k.reward(i, a), expected);
            }
        }
    }

    #[test]
    fn ijpa_without_signal_is_all_zero() {
        let mdp = build_restricted_mdp(Restricted::Ijpa, SystemModel::default(), 0).unwrap();
        let k = Kernel::build(&mdp);
        let plan = policy_iteration(&k, 0.9, DEFAULT_EPSILON);
        assert!(plan.values.0.iter().all(|&v| v == 0.0));
        for (_, a) in plan.policy.entries() {
            assert_eq!(Action::from_index(a, 4), Action::SILENT);
        }
    }

    #[test]
    fn restricted_feasible_actions_fix_the_mains_node() {
        let mdp = build_restricted_mdp(Restricted::Ijpa, SystemModel::default(), 2).unwrap();
        let acts = mdp.feasible_actions(&SystemState::new([0; 4], 0, 3));
        assert_eq!(acts, vec![Action::new(2, 0), Action::new(2, 1), Action::new(2, 2)]);
        assert_eq!(act_naive(&mdp, &SystemState::new([0; 4], 0, 3)), Action::new(2, 2));
    }
}
