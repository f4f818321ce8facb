//! Plain-text policy files.
//!
//! ```text
//! SECRECY-POLICY v1
//! <L> <bMaxS> <bMaxD> <M> <gamma>
//! planned <count>
//! <state> <action>        (count lines, state ascending)
//! ```
//!
//! A node powered from the mains is stored with a battery maximum of 0.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::StateSpace;
use crate::planner::Policy;

const MAGIC: &str = "SECRECY-POLICY v1";

pub fn policy_to_string(policy: &Policy) -> String {
    let space = policy.space();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        space.levels,
        space.b_max_source,
        space.b_max_dest,
        policy.num_power_levels(),
        policy.gamma()
    );
    let _ = writeln!(out, "planned {}", policy.planned_count());
    for (s, a) in policy.entries() {
        let _ = writeln!(out, "{s} {a}");
    }
    out
}

pub fn save_policy(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, policy_to_string(policy))?;
    Ok(())
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::PolicyFormat(format!("line {line}: {msg}"))
}

fn fields<const N: usize>(line: usize, text: Option<&str>) -> Result<[&str; N]> {
    let text = text.ok_or_else(|| bad(line, "unexpected end of file"))?;
    let parts: Vec<&str> = text.split_whitespace().collect();
    parts
        .try_into()
        .map_err(|_| bad(line, format!("expected {N} fields, got '{text}'")))
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| bad(line, format!("cannot parse '{s}'")))
}

pub fn policy_from_str(text: &str) -> Result<Policy> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(bad(1, format!("missing '{MAGIC}' header")));
    }
    let [l, bs, bd, m, gamma] = fields::<5>(2, lines.next())?;
    let space = StateSpace {
        levels: num(2, l)?,
        b_max_source: num(2, bs)?,
        b_max_dest: num(2, bd)?,
    };
    let m: usize = num(2, m)?;
    let gamma: f64 = num(2, gamma)?;
    if space.levels == 0 || m == 0 {
        return Err(bad(2, "L and M must be positive"));
    }
    let [tag, count] = fields::<2>(3, lines.next())?;
    if tag != "planned" {
        return Err(bad(3, "expected 'planned <count>'"));
    }
    let count: usize = num(3, count)?;
    let n = space.num_states();
    if count > n {
        return Err(bad(3, format!("{count} planned states exceed N_S = {n}")));
    }
    let mut actions = vec![None; n];
    let mut previous: Option<usize> = None;
    for k in 0..count {
        let line = k + 4;
        let [s, a] = fields::<2>(line, lines.next())?;
        let s: usize = num(line, s)?;
        let a: u32 = num(line, a)?;
        if s >= n {
            return Err(bad(line, format!("state {s} >= N_S = {n}")));
        }
        if a as usize >= m * m {
            return Err(bad(line, format!("action {a} >= M^2 = {}", m * m)));
        }
        if previous.is_some_and(|p| s <= p) {
            return Err(bad(line, "states must be strictly ascending"));
        }
        previous = Some(s);
        actions[s] = Some(a);
    }
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(bad(count + 4, format!("trailing content '{extra}'")));
    }
    Ok(Policy::new(space, m, gamma, actions))
}

/// Loads a policy file without checking it against any model.
pub fn load_policy(path: impl AsRef<Path>) -> Result<Policy> {
    policy_from_str(&std::fs::read_to_string(path)?)
}

/// Rejects a policy whose state space or action alphabet differs from the
/// expected one.
pub fn check_dimensions(policy: &Policy, space: StateSpace, num_power_levels: usize) -> Result<()> {
    if policy.space() != space || policy.num_power_levels() != num_power_levels {
        return Err(Error::DimensionMismatch {
            expected: format!("{space}, M = {num_power_levels}"),
            found: format!("{}, M = {}", policy.space(), policy.num_power_levels()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Kernel, Mdp};
    use crate::model::SystemModel;
    use crate::planner::policy_iteration;

    fn planned() -> Policy {
        let kernel = Kernel::build(&Mdp::joint(SystemModel::default()));
        policy_iteration(&kernel, 0.9, 0.07).policy
    }

    #[test]
    fn round_trip_is_identical() {
        let p = planned();
        let text = policy_to_string(&p);
        assert!(text.starts_with("SECRECY-POLICY v1\n2 5 5 4 0.9\nplanned 576\n0 "));
        let back = policy_from_str(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(policy_to_string(&back), text);
    }

    #[test]
    fn file_round_trip() {
        let p = planned();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        save_policy(&p, &path).unwrap();
        assert_eq!(load_policy(&path).unwrap(), p);
    }

    #[test]
    fn partial_policy_round_trip() {
        let space = StateSpace { levels: 2, b_max_source: 1, b_max_dest: 0 };
        let mut actions = vec![None; space.num_states()];
        actions[3] = Some(5);
        actions[17] = Some(0);
        let p = Policy::new(space, 3, 0.123456789, actions);
        assert_eq!(policy_from_str(&policy_to_string(&p)).unwrap(), p);
    }

    #[test]
    fn truncated_file_is_error() {
        let text = policy_to_string(&planned());
        let cut: String = text.lines().take(100).map(|l| format!("{l}\n")).collect();
        let err = policy_from_str(&cut).unwrap_err();
        assert!(matches!(err, Error::PolicyFormat(ref m) if m.contains("end of file")), "{err}");
        assert!(policy_from_str("").is_err());
        assert!(policy_from_str("SECRECY-POLICY v1\n").is_err());
    }

    #[test]
    fn malformed_entries_rejected() {
        let head = "SECRECY-POLICY v1\n2 0 0 2 0.5\nplanned 2\n";
        assert!(policy_from_str(&format!("{head}0 1\n16 0\n")).is_err());
        assert!(policy_from_str(&format!("{head}0 4\n1 0\n")).is_err());
        assert!(policy_from_str(&format!("{head}3 1\n2 0\n")).is_err());
        assert!(policy_from_str(&format!("{head}0 1\n1 0\n2 0\n")).is_err());
        assert!(policy_from_str(&format!("{head}0 1\n1 x\n")).is_err());
        assert!(policy_from_str(&format!("{head}0 1\n1 0\n")).is_ok());
    }

    #[test]
    fn dimension_mismatch_detected() {
        let p = planned();
        let other = StateSpace { levels: 2, b_max_source: 4, b_max_dest: 5 };
        assert!(matches!(check_dimensions(&p, other, 4), Err(Error::DimensionMismatch { .. })));
        assert!(check_dimensions(&p, p.space(), 3).is_err());
        assert!(check_dimensions(&p, p.space(), 4).is_ok());
    }
}
