//! Successor sets, `Order` counts and the closed-form limiting frequency of a
//! schema under unbounded recombination of an inflated population.
//!
//! Everything here is exact. For `h = (α, i₁, …, i_k, x)`:
//!
//! ```text
//! freq(h) = Order(α↓i₁)/b · Π_{q=2..k} Order(i_{q-1}↓i_q)/occ(i_{q-1}) · LF
//! ```
//!
//! with `occ(i) = Σ_j Order(i↓j) + i↓_Σ`, `LF = 1` for a `#` tail, and
//! `LF = (# terminals named f after i_k) / occ(i_k)` for a terminal tail `f`.
//! A factor with a zero numerator is zero whatever its denominator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Zero};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{ActionLabel, ClassId, Population, Schema, Tail, TerminalLabel};
use crate::rational::{self, factor, Rational};

/// Exact frequency in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frequency(Rational);

impl Frequency {
    pub fn new(value: Rational) -> Option<Self> {
        rational::is_unit_interval(&value).then_some(Frequency(value))
    }

    pub fn zero() -> Self {
        Frequency(Rational::zero())
    }

    pub fn one() -> Self {
        Frequency(Rational::one())
    }

    pub fn value(&self) -> &Rational {
        &self.0
    }

    pub fn into_inner(self) -> Rational {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        rational::to_f64(&self.0)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&rational::format(&self.0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionDown {
    /// Rollouts starting with this action.
    pub rollouts: u64,
    /// `Order(α↓j)` for every class `j` directly after the action.
    pub classes: BTreeMap<ClassId, u64>,
    /// Terminals directly after the action (rollouts without states).
    pub terminals: BTreeSet<TerminalLabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassDown {
    /// `Order(i↓j)`.
    pub classes: BTreeMap<ClassId, u64>,
    /// Terminal part of `i↓`; its size is `i↓_Σ`.
    pub terminals: BTreeSet<TerminalLabel>,
    /// Occurrences of the class counted directly from the rollouts.
    pub occurrences: u64,
}

impl ClassDown {
    pub fn terminal_count(&self) -> u64 {
        self.terminals.len() as u64
    }

    /// `occ(i) = Σ_j Order(i↓j) + i↓_Σ`.
    pub fn occ(&self) -> u64 {
        self.classes.values().sum::<u64>() + self.terminal_count()
    }

    fn terminals_named(&self, name: &str) -> u64 {
        self.terminals.iter().filter(|t| t.name() == name).count() as u64
    }
}

/// The `↓` calculus of a population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownReport {
    pub b: u64,
    pub actions: BTreeMap<ActionLabel, ActionDown>,
    pub classes: BTreeMap<ClassId, ClassDown>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema {0} does not end in #")]
pub struct NotWildcardTailed(pub String);

pub fn down_report(p: &Population) -> DownReport {
    let mut actions: BTreeMap<ActionLabel, ActionDown> = BTreeMap::new();
    let mut classes: BTreeMap<ClassId, ClassDown> = BTreeMap::new();
    for r in p.rollouts() {
        let a = actions.entry(r.action.clone()).or_default();
        a.rollouts += 1;
        match r.states.first() {
            Some(first) => *a.classes.entry(first.class).or_insert(0) += 1,
            None => {
                a.terminals.insert(r.terminal.clone());
            }
        }
        for (k, s) in r.states.iter().enumerate() {
            let c = classes.entry(s.class).or_default();
            c.occurrences += 1;
            match r.states.get(k + 1) {
                Some(next) => *c.classes.entry(next.class).or_insert(0) += 1,
                None => {
                    c.terminals.insert(r.terminal.clone());
                }
            }
        }
    }
    DownReport {
        b: p.size() as u64,
        actions,
        classes,
    }
}

impl DownReport {
    /// `α↓`: classes directly following the action.
    pub fn action_down(&self, action: &ActionLabel) -> BTreeSet<ClassId> {
        self.actions
            .get(action)
            .map(|a| a.classes.keys().copied().collect())
            .unwrap_or_default()
    }

    /// `Order(α↓j)`; zero when `j ∉ α↓`.
    pub fn action_order(&self, action: &ActionLabel, j: ClassId) -> u64 {
        self.actions
            .get(action)
            .and_then(|a| a.classes.get(&j).copied())
            .unwrap_or(0)
    }

    /// `Order(i↓j)`; zero when class `i` is absent or `j ∉ i↓`.
    pub fn order(&self, i: ClassId, j: ClassId) -> u64 {
        self.classes
            .get(&i)
            .and_then(|c| c.classes.get(&j).copied())
            .unwrap_or(0)
    }

    /// `i↓_Σ`.
    pub fn terminal_count(&self, i: ClassId) -> u64 {
        self.classes.get(&i).map_or(0, ClassDown::terminal_count)
    }

    pub fn occ(&self, i: ClassId) -> u64 {
        self.classes.get(&i).map_or(0, ClassDown::occ)
    }

    /// `Σ_i i↓_Σ`; equals `b` when every rollout has at least one state.
    pub fn terminal_total(&self) -> u64 {
        self.classes.values().map(ClassDown::terminal_count).sum()
    }

    /// Terminals attached directly to actions.
    pub fn stateless_total(&self) -> u64 {
        self.actions.values().map(|a| a.terminals.len() as u64).sum()
    }

    pub fn limiting_frequency(&self, h: &Schema) -> Frequency {
        let (action, classes, tail) = match h {
            Schema::Root => return Frequency::one(),
            Schema::Pattern {
                action,
                classes,
                tail,
            } => (action, classes, tail),
        };
        let b = self.b;
        let act = self.actions.get(action);
        let Some((&first, rest)) = classes.split_first() else {
            let numer = match tail {
                Tail::Wildcard => act.map_or(0, |a| a.rollouts),
                Tail::Terminal(name) => act.map_or(0, |a| {
                    a.terminals.iter().filter(|t| t.name() == name).count() as u64
                }),
            };
            return Frequency(factor(numer, b));
        };
        let mut value = factor(self.action_order(action, first), b);
        let mut prev = first;
        for &next in rest {
            if value.is_zero() {
                return Frequency(value);
            }
            value *= factor(self.order(prev, next), self.occ(prev));
            prev = next;
        }
        if let Tail::Terminal(name) = tail {
            let hits = self.classes.get(&prev).map_or(0, |c| c.terminals_named(name));
            value *= factor(hits, self.occ(prev));
        }
        Frequency(value)
    }

    /// Limiting frequencies of every one-step extension of a `#`-tailed
    /// schema: one more class followed by `#`, or a terminal name.
    pub fn frequency_children(
        &self,
        h: &Schema,
    ) -> Result<BTreeMap<Schema, Frequency>, NotWildcardTailed> {
        let (action, classes) = match h {
            Schema::Root => {
                return Ok(self
                    .actions
                    .keys()
                    .map(|a| {
                        let child = Schema::wildcard(a.clone(), vec![]);
                        let f = self.limiting_frequency(&child);
                        (child, f)
                    })
                    .collect())
            }
            Schema::Pattern {
                action,
                classes,
                tail: Tail::Wildcard,
            } => (action, classes),
            Schema::Pattern { .. } => return Err(NotWildcardTailed(h.to_string())),
        };
        let (next_classes, terminal_names): (Vec<ClassId>, BTreeSet<&str>) = match classes.last() {
            None => match self.actions.get(action) {
                Some(a) => (
                    a.classes.keys().copied().collect(),
                    a.terminals.iter().map(|t| t.name()).collect(),
                ),
                None => Default::default(),
            },
            Some(last) => match self.classes.get(last) {
                Some(c) => (
                    c.classes.keys().copied().collect(),
                    c.terminals.iter().map(|t| t.name()).collect(),
                ),
                None => Default::default(),
            },
        };
        let mut out = BTreeMap::new();
        for j in next_classes {
            let mut ext = classes.clone();
            ext.push(j);
            let child = Schema::wildcard(action.clone(), ext);
            let f = self.limiting_frequency(&child);
            out.insert(child, f);
        }
        for name in terminal_names {
            let child = Schema::Pattern {
                action: action.clone(),
                classes: classes.clone(),
                tail: Tail::Terminal(name.to_string()),
            };
            let f = self.limiting_frequency(&child);
            out.insert(child, f);
        }
        Ok(out)
    }

    /// JSON form used in reports. Map keys are sorted by serde_json.
    pub fn to_json(&self) -> Value {
        let labels = |set: &BTreeSet<TerminalLabel>| -> Vec<String> {
            set.iter().map(|t| t.to_string()).collect()
        };
        let counts = |m: &BTreeMap<ClassId, u64>| -> Map<String, Value> {
            m.iter().map(|(k, v)| (k.to_string(), json!(v))).collect()
        };
        let actions: Map<String, Value> = self
            .actions
            .iter()
            .map(|(a, d)| {
                (
                    a.to_string(),
                    json!({
                        "rollouts": d.rollouts,
                        "order": counts(&d.classes),
                        "terminals": labels(&d.terminals),
                    }),
                )
            })
            .collect();
        let classes: Map<String, Value> = self
            .classes
            .iter()
            .map(|(i, d)| {
                (
                    i.to_string(),
                    json!({
                        "order": counts(&d.classes),
                        "terminals": labels(&d.terminals),
                        "terminal_count": d.terminal_count(),
                        "occ": d.occ(),
                        "occurrences": d.occurrences,
                    }),
                )
            })
            .collect();
        json!({ "b": self.b, "actions": actions, "classes": classes })
    }
}

pub fn limiting_frequency(p: &Population, h: &Schema) -> Frequency {
    down_report(p).limiting_frequency(h)
}

pub fn frequency_children(
    p: &Population,
    h: &Schema,
) -> Result<BTreeMap<Schema, Frequency>, NotWildcardTailed> {
    down_report(p).frequency_children(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{act, class, p_a, p_b, ro};
    use crate::model::{inflate, schema_count};
    use crate::rational::ratio;
    use crate::syntax::parse_schema;

    fn freq(p: &Population, text: &str) -> Rational {
        limiting_frequency(p, &parse_schema(text).unwrap()).into_inner()
    }

    /// Direct scan over consecutive pairs, independent of `down_report`.
    fn brute_order(p: &Population, i: u32, j: u32) -> u64 {
        p.rollouts()
            .iter()
            .flat_map(|r| r.states.windows(2))
            .filter(|w| w[0].class.get() == i && w[1].class.get() == j)
            .count() as u64
    }

    #[test]
    fn down_report_p_a() {
        let p = p_a();
        let d = down_report(&p);
        assert_eq!(d.action_down(&act("alpha")), [class(1)].into());
        assert_eq!(d.action_down(&act("beta")), [class(1)].into());
        assert_eq!(d.order(class(1), class(2)), 3);
        assert_eq!(d.order(class(1), class(2)), brute_order(&p, 1, 2));
        assert_eq!(d.terminal_count(class(1)), 0);
        assert_eq!(d.terminal_count(class(2)), 3);
        let names: Vec<_> = d.classes[&class(2)]
            .terminals
            .iter()
            .map(|t| t.to_string())
            .collect();
        assert_eq!(names, ["f1", "f2", "f3"]);
        assert_eq!(d.action_order(&act("alpha"), class(1)), 2);
        assert_eq!(d.action_order(&act("beta"), class(1)), 1);
        assert_eq!(d.terminal_total(), 3);
    }

    #[test]
    fn down_report_p_b() {
        let p = p_b();
        let d = down_report(&p);
        assert_eq!(d.order(class(1), class(2)), 1);
        assert_eq!(d.order(class(2), class(1)), 1);
        assert_eq!(d.terminal_count(class(1)), 1);
        assert_eq!(d.terminal_count(class(2)), 1);
        assert_eq!(d.occ(class(1)), 2);
        assert_eq!(d.classes[&class(1)].occurrences, 2);
        assert_eq!(d.order(class(5), class(1)), 0);
        assert_eq!(d.order(class(1), class(1)), 0);
    }

    #[test]
    fn eq1_values() {
        assert_eq!(freq(&p_a(), "alpha,1,2,f1"), ratio(2, 9));
        assert_eq!(freq(&p_a(), "#"), ratio(1, 1));
        assert_eq!(freq(&p_a(), "alpha,5,#"), ratio(0, 1));
        assert_eq!(freq(&p_b(), "alpha,1,2,f1"), ratio(1, 8));
        // f2 never follows class 2 in P_A? it does: 2↓ = {f1,f2,f3}
        assert_eq!(freq(&p_a(), "beta,1,2,f2"), ratio(1, 9));
        // terminal not in 1↓
        assert_eq!(freq(&p_a(), "alpha,1,f1"), ratio(0, 1));
    }

    #[test]
    fn children_examples() {
        let kids = |p: &Population, h: &str| -> Vec<(String, Rational)> {
            frequency_children(p, &parse_schema(h).unwrap())
                .unwrap()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.into_inner()))
                .collect::<BTreeMap<_, _>>()
                .into_iter()
                .collect()
        };
        assert_eq!(
            kids(&p_a(), "alpha,1,#"),
            vec![("alpha,1,2,#".to_string(), ratio(2, 3))]
        );
        assert_eq!(
            kids(&p_b(), "alpha,1,#"),
            vec![
                ("alpha,1,2,#".to_string(), ratio(1, 4)),
                ("alpha,1,f2".to_string(), ratio(1, 4))
            ]
        );
        assert_eq!(
            kids(&p_a(), "alpha,1,2,#"),
            vec![
                ("alpha,1,2,f1".to_string(), ratio(2, 9)),
                ("alpha,1,2,f2".to_string(), ratio(2, 9)),
                ("alpha,1,2,f3".to_string(), ratio(2, 9)),
            ]
        );
        assert!(frequency_children(&p_a(), &parse_schema("alpha,1,f1").unwrap()).is_err());
    }

    #[test]
    fn stateless_rollouts() {
        let p = Population::new(vec![
            ro("alpha", &[], "g"),
            ro("alpha", &[(1, "a")], "f"),
            ro("beta", &[(1, "b")], "h"),
        ])
        .unwrap();
        assert_eq!(freq(&p, "alpha,g"), ratio(1, 3));
        assert_eq!(freq(&p, "alpha,#"), ratio(2, 3));
        assert_eq!(freq(&p, "alpha,1,f"), ratio(1, 6));
        let d = down_report(&p);
        assert_eq!(d.terminal_total() + d.stateless_total(), 3);
        let sum: Rational = d
            .frequency_children(&parse_schema("alpha,#").unwrap())
            .unwrap()
            .into_values()
            .map(Frequency::into_inner)
            .sum();
        assert_eq!(sum, ratio(2, 3));
    }

    #[test]
    fn inflation_leaves_frequencies_unchanged() {
        for p in [p_a(), p_b()] {
            for m in 1..=3 {
                let q = inflate(&p, m);
                for h in ["alpha,1,2,f1", "alpha,1,#", "beta,2,1,f2", "beta,#", "#"] {
                    assert_eq!(freq(&p, h), freq(&q, h), "{h} at m={m}");
                    let s = parse_schema(h).unwrap();
                    assert_eq!(
                        schema_count(&s, &q),
                        m as usize * schema_count(&s, &p)
                    );
                }
            }
        }
    }

    #[test]
    fn root_children_split_by_action() {
        let kids = frequency_children(&p_a(), &Schema::Root).unwrap();
        let values: Vec<_> = kids.values().map(|f| f.value().clone()).collect();
        assert_eq!(values, vec![ratio(2, 3), ratio(1, 3)]);
    }

    #[test]
    fn report_json_is_keyed() {
        let v = down_report(&p_b()).to_json();
        assert_eq!(v["b"], 2);
        assert_eq!(v["classes"]["1"]["occ"], 2);
        assert_eq!(v["actions"]["beta"]["order"]["2"], 1);
    }
}
