//! Exact orbit oracles.
//!
//! The recombination chain is a symmetric random walk on the orbit of the
//! initial population (every generator is an involution), so its stationary
//! law is uniform on the orbit and the limiting frequency of a schema is the
//! plain orbit average of `𝒳(h,·)/b`.
//!
//! [`enumerate_orbit`] builds the orbit literally, member by member.
//! [`enumerate_quotient_orbit`] works on shapes instead: `ν_{i,c,d}` is the
//! transposition of tags `c` and `d` within class `i`, so the orbit contains
//! every tag relabelling of each population in it and is a union of full
//! relabelling classes of equal size `Π_i n_i!`. Schema counts ignore tags,
//! so averaging over shapes gives the same exact mean. When every group of
//! same-named terminal copies sits on rollouts with one common non-empty
//! class sequence (as inflation produces), one-point crossover at the first
//! state swaps two such copies, and terminal copies are quotiented as well.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexSet;
use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use crate::model::{Population, Schema};
use crate::rational::ratio;
use crate::stats::Frequency;

use super::chain::Chain;
use super::codec::{is_terminal, swap_suffixes, Codec, CompiledSchema, TERMINAL};
use super::{generator_index, TransformDistribution};

pub const DEFAULT_ORBIT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrbitError {
    #[error("orbit has more than {cap} members")]
    CapExceeded { cap: usize },
}

/// Every population reachable from the initial one.
#[derive(Debug, Clone)]
pub struct OrbitSet {
    codec: Codec,
    members: IndexSet<Vec<u32>>,
    /// Distinct shapes with the number of members having each.
    shapes: Vec<(Vec<u32>, u64)>,
}

/// Breadth-first closure of `{p0}` under all generators of `p0`.
pub fn enumerate_orbit(p0: &Population, cap: usize) -> Result<OrbitSet, OrbitError> {
    let codec = Codec::new(p0);
    let moves: Vec<_> = generator_index(p0)
        .iter()
        .filter_map(|g| codec.encode_transform(g))
        .collect();
    let mut members = IndexSet::new();
    members.insert(codec.encode(p0));
    let mut next = 0;
    while next < members.len() {
        let current = members[next].clone();
        for m in &moves {
            let mut v = current.clone();
            m.apply(&mut v);
            if members.insert(v) && members.len() > cap {
                return Err(OrbitError::CapExceeded { cap });
            }
        }
        next += 1;
    }
    let mut shapes: HashMap<Vec<u32>, u64> = HashMap::new();
    for m in &members {
        *shapes.entry(codec.shape(m)).or_insert(0) += 1;
    }
    let mut shapes: Vec<_> = shapes.into_iter().collect();
    shapes.sort();
    Ok(OrbitSet {
        codec,
        members,
        shapes,
    })
}

impl OrbitSet {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn initial(&self) -> Population {
        self.member(0)
    }

    pub fn member(&self, idx: usize) -> Population {
        self.codec.decode(&self.members[idx])
    }

    pub fn members(&self) -> impl Iterator<Item = Population> + '_ {
        self.members.iter().map(|m| self.codec.decode(m))
    }

    pub fn index_of(&self, p: &Population) -> Option<usize> {
        if p.size() != self.codec.b() {
            return None;
        }
        let same_states = p.states().count() == self.members[0].len() - self.codec.b();
        if !same_states {
            return None;
        }
        // encode panics on foreign states; check membership of every state first
        let initial = self.initial();
        let known: std::collections::HashSet<_> = initial.states().collect();
        if !p.states().all(|s| known.contains(s))
            || !p.terminals().all(|t| self.codec.terminals().contains(t))
        {
            return None;
        }
        self.members.get_index_of(&self.codec.encode(p))
    }

    pub fn shape_count(&self) -> usize {
        self.shapes.len()
    }

    /// Sorted multiplicities of the distinct shapes.
    pub fn shape_multiplicities(&self) -> Vec<u64> {
        let mut m: Vec<u64> = self.shapes.iter().map(|(_, n)| *n).collect();
        m.sort_unstable();
        m
    }

    /// `Σ 𝒳(h, P)` over all members `P`.
    pub fn total_count(&self, h: &Schema) -> u64 {
        let compiled = self.codec.compile(h);
        self.shapes
            .iter()
            .map(|(s, n)| n * compiled.count(s, self.codec.rollout_actions(), |t| t))
            .sum()
    }

    /// Exact mean of `𝒳(h,·)/b` over the orbit.
    pub fn frequency(&self, h: &Schema) -> Frequency {
        let denom = self.size() as u64 * self.codec.b() as u64;
        Frequency::new(ratio(self.total_count(h), denom)).expect("mean of fractions in [0,1]")
    }

    /// Runs the recombination chain from the initial member and counts, by
    /// member index, the state after every `thin`-th step.
    pub fn visit_counts(
        &self,
        mu: &TransformDistribution,
        steps: u64,
        thin: u64,
        seed: u64,
    ) -> Vec<u64> {
        assert!(thin >= 1);
        let mut chain = Chain::new(&self.initial(), mu, seed);
        debug_assert_eq!(chain.state, self.members[0]);
        let mut visits = vec![0u64; self.size()];
        for t in 1..=steps {
            chain.step(mu);
            if t % thin == 0 {
                let idx = self
                    .members
                    .get_index_of(&chain.state)
                    .expect("chain stays inside its orbit");
                visits[idx] += 1;
            }
        }
        visits
    }
}

pub fn orbit_frequency(o: &OrbitSet, h: &Schema) -> Frequency {
    o.frequency(h)
}

/// Orbit enumerated up to tag relabelling (and terminal-copy relabelling
/// when that is certified; see the module docs).
#[derive(Debug, Clone)]
pub struct QuotientOrbit {
    codec: Codec,
    /// Token each terminal id is written as in a shape.
    terminal_token: Vec<u32>,
    shapes: IndexSet<Vec<u32>>,
    tag_symmetry: BigUint,
    terminal_symmetry: BigUint,
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// Terminal copies can be merged when every rollout carrying a shared
/// terminal name has the same non-empty class sequence.
fn terminal_copies_mergeable(p0: &Population) -> bool {
    let mut by_name: BTreeMap<&str, Vec<Vec<u32>>> = BTreeMap::new();
    for r in p0.rollouts() {
        by_name
            .entry(r.terminal.name())
            .or_default()
            .push(r.classes().map(|c| c.get()).collect());
    }
    by_name
        .values()
        .filter(|seqs| seqs.len() > 1)
        .all(|seqs| !seqs[0].is_empty() && seqs.iter().all(|s| s == &seqs[0]))
}

pub fn enumerate_quotient_orbit(p0: &Population, cap: usize) -> Result<QuotientOrbit, OrbitError> {
    let codec = Codec::new(p0);
    let merge = terminal_copies_mergeable(p0);
    let mut names: Vec<&str> = codec.terminals().iter().map(|t| t.name()).collect();
    names.sort_unstable();
    names.dedup();
    let terminal_token: Vec<u32> = codec
        .terminals()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if merge {
                TERMINAL | names.binary_search(&t.name()).unwrap() as u32
            } else {
                TERMINAL | i as u32
            }
        })
        .collect();
    let relabel = |v: Vec<u32>| -> Vec<u32> {
        v.into_iter()
            .map(|t| {
                if is_terminal(t) {
                    terminal_token[(t & !TERMINAL) as usize]
                } else {
                    t
                }
            })
            .collect()
    };
    let start = relabel(codec.shape(&codec.encode(p0)));

    let mut shapes = IndexSet::new();
    shapes.insert(start);
    let mut next = 0;
    while next < shapes.len() {
        let current = shapes[next].clone();
        let mut slot = Vec::with_capacity(current.len());
        let mut r = 0;
        for &t in &current {
            slot.push(r);
            if is_terminal(t) {
                r += 1;
            }
        }
        for pa in 0..current.len() {
            if is_terminal(current[pa]) {
                continue;
            }
            for pb in pa + 1..current.len() {
                if current[pb] != current[pa] || slot[pb] == slot[pa] {
                    continue;
                }
                let mut v = current.clone();
                swap_suffixes(&mut v, pa, pb);
                if shapes.insert(v) && shapes.len() > cap {
                    return Err(OrbitError::CapExceeded { cap });
                }
            }
        }
        next += 1;
    }

    let mut per_class: BTreeMap<u32, u64> = BTreeMap::new();
    for s in p0.states() {
        *per_class.entry(s.class.get()).or_insert(0) += 1;
    }
    let tag_symmetry = per_class
        .values()
        .fold(BigUint::one(), |acc, &n| acc * factorial(n));
    let terminal_symmetry = if merge {
        let mut per_name: BTreeMap<&str, u64> = BTreeMap::new();
        for t in codec.terminals() {
            *per_name.entry(t.name()).or_insert(0) += 1;
        }
        per_name
            .values()
            .fold(BigUint::one(), |acc, &n| acc * factorial(n))
    } else {
        BigUint::one()
    };
    Ok(QuotientOrbit {
        codec,
        terminal_token,
        shapes,
        tag_symmetry,
        terminal_symmetry,
    })
}

impl QuotientOrbit {
    pub fn shape_count(&self) -> usize {
        self.shapes.len()
    }

    pub fn merges_terminal_copies(&self) -> bool {
        self.terminal_symmetry != BigUint::one()
    }

    /// Number of populations in the full orbit.
    pub fn size(&self) -> BigUint {
        BigUint::from(self.shapes.len()) * &self.tag_symmetry * &self.terminal_symmetry
    }

    pub fn total_count(&self, h: &Schema) -> u64 {
        let compiled = match self.codec.compile(h) {
            CompiledSchema::Pattern {
                action,
                classes,
                terminals: Some(ts),
            } => {
                let mut ts: Vec<u32> = ts
                    .into_iter()
                    .map(|t| self.terminal_token[(t & !TERMINAL) as usize])
                    .collect();
                ts.sort_unstable();
                ts.dedup();
                CompiledSchema::Pattern {
                    action,
                    classes,
                    terminals: Some(ts),
                }
            }
            other => other,
        };
        self.shapes
            .iter()
            .map(|s| compiled.count(s, self.codec.rollout_actions(), |t| t))
            .sum()
    }

    /// Exact orbit mean of `𝒳(h,·)/b`.
    pub fn frequency(&self, h: &Schema) -> Frequency {
        let denom = self.shapes.len() as u64 * self.codec.b() as u64;
        Frequency::new(ratio(self.total_count(h), denom)).expect("mean of fractions in [0,1]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{p_a, p_b, ro};
    use crate::model::{inflate, schema_count};
    use crate::syntax::parse_schema;

    fn h(s: &str) -> Schema {
        parse_schema(s).unwrap()
    }

    #[test]
    fn p_a_orbit() {
        let o = enumerate_orbit(&p_a(), DEFAULT_ORBIT_CAP).unwrap();
        assert_eq!(o.size(), 216);
        assert_eq!(o.shape_count(), 6);
        assert_eq!(o.shape_multiplicities(), vec![36; 6]);
        assert_eq!(o.frequency(&h("alpha,1,2,f1")).value(), &ratio(2, 9));
        assert_eq!(o.frequency(&Schema::Root).value(), &ratio(1, 1));
        assert_eq!(o.initial(), p_a());
        assert_eq!(o.index_of(&p_a()), Some(0));
    }

    #[test]
    fn brute_mean_over_members() {
        let o = enumerate_orbit(&p_b(), DEFAULT_ORBIT_CAP).unwrap();
        let s = h("alpha,1,2,f1");
        let direct: usize = o.members().map(|m| schema_count(&s, &m)).sum();
        assert_eq!(o.total_count(&s), direct as u64);
    }

    #[test]
    fn trivial_orbit() {
        let p = Population::new(vec![
            ro("alpha", &[(1, "a"), (2, "a")], "f1"),
            ro("beta", &[(3, "a")], "f2"),
        ])
        .unwrap();
        assert_eq!(enumerate_orbit(&p, 10).unwrap().size(), 1);
        assert_eq!(enumerate_quotient_orbit(&p, 10).unwrap().size(), BigUint::one());
    }

    #[test]
    fn cap_is_enforced() {
        assert_eq!(
            enumerate_orbit(&p_a(), 100).unwrap_err(),
            OrbitError::CapExceeded { cap: 100 }
        );
        assert!(enumerate_quotient_orbit(&inflate(&p_b(), 3), 10).is_err());
    }

    #[test]
    fn quotient_agrees_with_literal_orbit() {
        let mixed = Population::new(vec![
            ro("alpha", &[(1, "a"), (2, "a")], "f1"),
            ro("beta", &[(1, "b")], "f2"),
            ro("alpha", &[(2, "b"), (1, "c")], "f3"),
        ])
        .unwrap();
        for p in [p_a(), p_b(), inflate(&p_b(), 2), mixed] {
            let full = enumerate_orbit(&p, DEFAULT_ORBIT_CAP).unwrap();
            let q = enumerate_quotient_orbit(&p, DEFAULT_ORBIT_CAP).unwrap();
            assert_eq!(q.size(), BigUint::from(full.size()));
            for s in ["#", "alpha,1,2,f1", "alpha,1,#", "beta,2,1,f2", "alpha,1,f2", "beta,2,#"] {
                assert_eq!(q.frequency(&h(s)), full.frequency(&h(s)), "{s}");
            }
        }
    }

    #[test]
    fn inflated_p_b_moves_toward_closed_form() {
        let s = h("alpha,1,2,f1");
        let values: Vec<_> = (1..=3)
            .map(|m| {
                enumerate_quotient_orbit(&inflate(&p_b(), m), DEFAULT_ORBIT_CAP)
                    .unwrap()
                    .frequency(&s)
                    .into_inner()
            })
            .collect();
        assert_eq!(values, vec![ratio(1, 6), ratio(7, 54), ratio(19, 150)]);
    }

    #[test]
    fn mergeability_check() {
        use crate::model::{Rollout, TerminalLabel};
        assert!(terminal_copies_mergeable(&inflate(&p_b(), 3)));
        let mut rollouts = vec![ro("alpha", &[(1, "a")], "f1"), ro("alpha", &[(2, "a")], "f1")];
        rollouts[1] = Rollout::new(
            rollouts[1].action.clone(),
            rollouts[1].states.clone(),
            TerminalLabel::with_copy("f1", 1).unwrap(),
        );
        let p = Population::new(rollouts).unwrap();
        assert!(!terminal_copies_mergeable(&p));
        let q = enumerate_quotient_orbit(&p, 10).unwrap();
        assert!(!q.merges_terminal_copies());
    }
}
