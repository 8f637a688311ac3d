//! Small reference populations used by the tests, the verification suite
//! and the files under `fixtures/`.

use crate::model::{ActionLabel, ClassId, PayoffMap, Population, Rollout, StateTag, TaggedState, TerminalLabel};
use crate::rational::from_int;

fn rollout(action: &str, states: &[(u32, &str)], terminal: &str) -> Rollout {
    Rollout::new(
        ActionLabel::new(action).expect("fixture action"),
        states
            .iter()
            .map(|&(c, t)| {
                TaggedState::new(
                    ClassId::new(c).expect("fixture class"),
                    StateTag::new(t).expect("fixture tag"),
                )
            })
            .collect(),
        TerminalLabel::new(terminal).expect("fixture terminal"),
    )
}

fn payoffs(pairs: &[(&str, i64)]) -> PayoffMap {
    pairs.iter().map(|(k, v)| (k.to_string(), from_int(*v))).collect()
}

/// Homologous: `(α,(1,a),(2,a),f1)`, `(α,(1,b),(2,b),f2)`, `(β,(1,c),(2,c),f3)`.
pub fn p_a() -> Population {
    Population::new(vec![
        rollout("alpha", &[(1, "a"), (2, "a")], "f1"),
        rollout("alpha", &[(1, "b"), (2, "b")], "f2"),
        rollout("beta", &[(1, "c"), (2, "c")], "f3"),
    ])
    .expect("valid fixture")
}

/// φ(f1)=1, φ(f2)=0, φ(f3)=2.
pub fn p_a_payoffs() -> PayoffMap {
    payoffs(&[("f1", 1), ("f2", 0), ("f3", 2)])
}

/// Non-homologous: `(α,(1,a),(2,a),f1)`, `(β,(2,b),(1,b),f2)`.
pub fn p_b() -> Population {
    Population::new(vec![
        rollout("alpha", &[(1, "a"), (2, "a")], "f1"),
        rollout("beta", &[(2, "b"), (1, "b")], "f2"),
    ])
    .expect("valid fixture")
}

/// φ(f1)=1, φ(f2)=0.
pub fn p_b_payoffs() -> PayoffMap {
    payoffs(&[("f1", 1), ("f2", 0)])
}

/// Seven rollouts over classes 1..=7 and actions α, β, γ, ξ, π with heights
/// 5, 4, 3, 5, 3, 1, 4 and terminal `fk` closing rollout `k`.
pub fn p_seven() -> Population {
    Population::new(vec![
        rollout("alpha", &[(1, "a"), (5, "a"), (6, "a"), (3, "a"), (7, "a")], "f1"),
        rollout("beta", &[(2, "a"), (1, "b"), (3, "c"), (6, "b")], "f2"),
        rollout("gamma", &[(4, "a"), (6, "c"), (5, "b")], "f3"),
        rollout("alpha", &[(1, "c"), (4, "b"), (2, "b"), (7, "b"), (5, "c")], "f4"),
        rollout("xi", &[(3, "b"), (2, "c"), (4, "c")], "f5"),
        rollout("xi", &[(2, "d")], "f6"),
        rollout("pi", &[(3, "d"), (1, "d"), (2, "e"), (6, "d")], "f7"),
    ])
    .expect("valid fixture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::down_report;

    #[test]
    fn seven_rollout_counts() {
        let p = p_seven();
        let heights: Vec<usize> = p.rollouts().iter().map(|r| r.height()).collect();
        assert_eq!(heights, vec![5, 4, 3, 5, 3, 1, 4]);
        let d = down_report(&p);
        let ends: Vec<u64> = (1..=7)
            .map(|i| d.terminal_count(ClassId::new(i).unwrap()))
            .collect();
        assert_eq!(ends, vec![0, 1, 0, 1, 2, 2, 1]);
        assert_eq!(ends.iter().sum::<u64>(), 7);
        let c = |i| ClassId::new(i).unwrap();
        let a = |s: &str| ActionLabel::new(s).unwrap();
        let follows = |i: u32| -> Vec<u32> {
            d.classes[&c(i)].classes.keys().map(|j| j.get()).collect()
        };
        assert_eq!(follows(1), vec![2, 3, 4, 5]);
        assert_eq!(follows(2), vec![1, 4, 6, 7]);
        assert_eq!(follows(3), vec![1, 2, 6, 7]);
        assert_eq!(follows(4), vec![2, 6]);
        assert_eq!(follows(5), vec![6]);
        assert_eq!(follows(6), vec![3, 5]);
        assert_eq!(follows(7), vec![5]);
        for i in 1..=7 {
            for j in 1..=7 {
                assert!(d.order(c(i), c(j)) <= 1);
            }
        }
        assert_eq!(d.action_order(&a("alpha"), c(1)), 2);
        assert_eq!(d.action_order(&a("beta"), c(2)), 1);
        assert_eq!(d.action_order(&a("gamma"), c(4)), 1);
        assert_eq!(d.action_order(&a("xi"), c(3)), 1);
        assert_eq!(d.action_order(&a("xi"), c(2)), 1);
        assert_eq!(d.action_order(&a("pi"), c(3)), 1);
    }
}
