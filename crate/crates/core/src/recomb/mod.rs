//! Crossover transformations on populations, the Markov chain they drive, and
//! exact orbit enumeration.
//!
//! Two primitive transforms act on a population, both parameterised by a
//! class `i` and two tags `c`, `d`:
//!
//! * `χ` (one-point): if `(i,c)` and `(i,d)` sit in different rollouts, the
//!   suffixes starting at them (terminals included) are exchanged.
//! * `ν` (single swap): the two states trade places, across rollouts or
//!   within one.
//!
//! Both are involutions and only rearrange existing states.

mod chain;
mod codec;
mod orbit;

pub use chain::{run_chain, run_chain_observed, ChainTrace};
pub use orbit::{
    enumerate_orbit, enumerate_quotient_orbit, orbit_frequency, OrbitError, OrbitSet,
    QuotientOrbit, DEFAULT_ORBIT_CAP,
};

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::model::{ClassId, Population, StateTag, TaggedState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransformKind {
    OnePoint,
    SingleSwap,
}

/// A primitive recombination transform. Tag pairs are stored ordered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transform {
    Identity,
    Cross {
        kind: TransformKind,
        class: ClassId,
        tags: (StateTag, StateTag),
    },
}

impl Transform {
    pub fn one_point(class: ClassId, c: StateTag, d: StateTag) -> Self {
        Self::cross(TransformKind::OnePoint, class, c, d)
    }

    pub fn single_swap(class: ClassId, c: StateTag, d: StateTag) -> Self {
        Self::cross(TransformKind::SingleSwap, class, c, d)
    }

    fn cross(kind: TransformKind, class: ClassId, c: StateTag, d: StateTag) -> Self {
        assert_ne!(c, d, "transform tags must differ");
        let tags = if c < d { (c, d) } else { (d, c) };
        Transform::Cross { kind, class, tags }
    }

    pub fn apply(&self, p: &Population) -> Population {
        match self {
            Transform::Identity => p.clone(),
            Transform::Cross {
                kind: TransformKind::OnePoint,
                class,
                tags: (c, d),
            } => apply_chi(p, *class, c, d),
            Transform::Cross {
                kind: TransformKind::SingleSwap,
                class,
                tags: (c, d),
            } => apply_nu(p, *class, c, d),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => f.write_str("id"),
            Transform::Cross {
                kind,
                class,
                tags: (c, d),
            } => {
                let sym = match kind {
                    TransformKind::OnePoint => "chi",
                    TransformKind::SingleSwap => "nu",
                };
                write!(f, "{sym}[{class};{c},{d}]")
            }
        }
    }
}

fn locate(p: &Population, state: &TaggedState) -> Option<(usize, usize)> {
    p.rollouts().iter().enumerate().find_map(|(r, ro)| {
        ro.states
            .iter()
            .position(|s| s == state)
            .map(|k| (r, k))
    })
}

fn locate_pair(
    p: &Population,
    class: ClassId,
    c: &StateTag,
    d: &StateTag,
) -> Option<((usize, usize), (usize, usize))> {
    if c == d {
        return None;
    }
    let x = locate(p, &TaggedState::new(class, c.clone()))?;
    let y = locate(p, &TaggedState::new(class, d.clone()))?;
    Some((x, y))
}

/// One-point crossover `χ_{class,c,d}`. Leaves `p` unchanged unless the two
/// states occur in two different rollouts.
pub fn apply_chi(p: &Population, class: ClassId, c: &StateTag, d: &StateTag) -> Population {
    let Some(((r1, k), (r2, q))) = locate_pair(p, class, c, d) else {
        return p.clone();
    };
    if r1 == r2 {
        return p.clone();
    }
    let mut rollouts = p.rollouts().to_vec();
    let tail1 = rollouts[r1].states.split_off(k);
    let tail2 = rollouts[r2].states.split_off(q);
    rollouts[r1].states.extend(tail2);
    rollouts[r2].states.extend(tail1);
    let t1 = rollouts[r1].terminal.clone();
    rollouts[r1].terminal = std::mem::replace(&mut rollouts[r2].terminal, t1);
    Population::from_rearranged(rollouts)
}

/// Single position swap `ν_{class,c,d}`.
pub fn apply_nu(p: &Population, class: ClassId, c: &StateTag, d: &StateTag) -> Population {
    let Some(((r1, k), (r2, q))) = locate_pair(p, class, c, d) else {
        return p.clone();
    };
    let mut rollouts = p.rollouts().to_vec();
    let a = rollouts[r1].states[k].clone();
    let b = std::mem::replace(&mut rollouts[r2].states[q], a);
    rollouts[r1].states[k] = b;
    Population::from_rearranged(rollouts)
}

/// Identity followed by one χ and one ν for every class and every unordered
/// pair of tags present in that class.
pub fn generator_index(p: &Population) -> Vec<Transform> {
    let mut by_class: BTreeMap<ClassId, Vec<&StateTag>> = BTreeMap::new();
    for s in p.states() {
        by_class.entry(s.class).or_default().push(&s.tag);
    }
    let mut out = vec![Transform::Identity];
    for (class, mut tags) in by_class {
        tags.sort();
        for (x, c) in tags.iter().enumerate() {
            for d in &tags[x + 1..] {
                out.push(Transform::one_point(class, (*c).clone(), (*d).clone()));
                out.push(Transform::single_swap(class, (*c).clone(), (*d).clone()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("identity probability must lie in (0,1), got {0}")]
pub struct InvalidIdentityProb(pub f64);

pub const DEFAULT_IDENTITY_PROB: f64 = 0.01;

/// `μ`: identity with probability `ε`, otherwise a uniformly chosen
/// non-identity generator of the initial population.
#[derive(Debug, Clone)]
pub struct TransformDistribution {
    identity_prob: f64,
    generators: Vec<Transform>,
}

impl TransformDistribution {
    pub fn new(p0: &Population, identity_prob: f64) -> Result<Self, InvalidIdentityProb> {
        if !(identity_prob > 0.0 && identity_prob < 1.0) {
            return Err(InvalidIdentityProb(identity_prob));
        }
        let generators = generator_index(p0)
            .into_iter()
            .filter(|g| *g != Transform::Identity)
            .collect();
        Ok(TransformDistribution {
            identity_prob,
            generators,
        })
    }

    pub fn identity_prob(&self) -> f64 {
        self.identity_prob
    }

    /// Non-identity generators.
    pub fn generators(&self) -> &[Transform] {
        &self.generators
    }

    /// Index into [`generators`](Self::generators), or `None` for identity.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.generators.is_empty() || rng.gen_bool(self.identity_prob) {
            None
        } else {
            Some(rng.gen_range(0..self.generators.len()))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Transform {
        match self.sample_index(rng) {
            None => &Transform::Identity,
            Some(i) => &self.generators[i],
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::tests::{class, p_a, p_b, ro};
    use crate::model::{inflate, Population};
    use crate::stats::down_report;

    pub(crate) fn tag(t: &str) -> StateTag {
        StateTag::new(t).unwrap()
    }

    #[test]
    fn chi_on_p_b() {
        let q = apply_chi(&p_b(), class(1), &tag("a"), &tag("b"));
        let want = Population::new(vec![
            ro("alpha", &[(1, "b")], "f2"),
            ro("beta", &[(2, "b"), (1, "a"), (2, "a")], "f1"),
        ])
        .unwrap();
        assert_eq!(q, want);
        assert_eq!(q.rollouts()[0].height(), 1);
        assert_eq!(q.rollouts()[1].height(), 3);
    }

    #[test]
    fn chi_fixes_same_rollout_pair() {
        let q = Population::new(vec![
            ro("alpha", &[(6, "a"), (2, "x"), (6, "b")], "f1"),
            ro("beta", &[(6, "c")], "f2"),
        ])
        .unwrap();
        assert_eq!(apply_chi(&q, class(6), &tag("a"), &tag("b")), q);
        let swapped = apply_nu(&q, class(6), &tag("a"), &tag("b"));
        assert_eq!(
            swapped.rollouts()[0],
            ro("alpha", &[(6, "b"), (2, "x"), (6, "a")], "f1")
        );
    }

    #[test]
    fn absent_tags_leave_population_alone() {
        assert_eq!(apply_chi(&p_a(), class(1), &tag("a"), &tag("z")), p_a());
        assert_eq!(apply_nu(&p_a(), class(1), &tag("a"), &tag("z")), p_a());
        assert_eq!(apply_nu(&p_a(), class(3), &tag("a"), &tag("b")), p_a());
    }

    #[test]
    fn nu_on_p_b() {
        let q = apply_nu(&p_b(), class(1), &tag("a"), &tag("b"));
        let want = Population::new(vec![
            ro("alpha", &[(1, "b"), (2, "a")], "f1"),
            ro("beta", &[(2, "b"), (1, "a")], "f2"),
        ])
        .unwrap();
        assert_eq!(q, want);
    }

    #[test]
    fn nu_within_rollout() {
        let p = Population::new(vec![ro("alpha", &[(1, "a"), (2, "a"), (1, "b")], "f")]).unwrap();
        let q = apply_nu(&p, class(1), &tag("a"), &tag("b"));
        assert_eq!(q.rollouts()[0], ro("alpha", &[(1, "b"), (2, "a"), (1, "a")], "f"));
    }

    #[test]
    fn generator_counts() {
        assert_eq!(generator_index(&p_a()).len(), 13);
        assert_eq!(generator_index(&p_b()).len(), 5);
        let distinct = Population::new(vec![
            ro("alpha", &[(1, "a"), (2, "a")], "f1"),
            ro("beta", &[(3, "a")], "f2"),
        ])
        .unwrap();
        assert_eq!(generator_index(&distinct), vec![Transform::Identity]);
    }

    #[test]
    fn every_generator_is_an_involution_on_fixtures() {
        for p in [p_a(), p_b(), inflate(&p_b(), 2)] {
            let d = down_report(&p);
            for g in generator_index(&p) {
                let q = g.apply(&p);
                assert_eq!(g.apply(&q), p, "{g}");
                assert_eq!(down_report(&q), d, "{g}");
            }
        }
    }

    #[test]
    fn distribution_rejects_bad_epsilon() {
        assert!(TransformDistribution::new(&p_a(), 0.0).is_err());
        assert!(TransformDistribution::new(&p_a(), 1.0).is_err());
        assert!(TransformDistribution::new(&p_a(), f64::NAN).is_err());
        let mu = TransformDistribution::new(&p_a(), 0.5).unwrap();
        assert_eq!(mu.generators().len(), 12);
    }
}
