//! Compact integer encoding of the populations reachable from one initial
//! population, used by the chain and the orbit oracle.
//!
//! A population is a flat `Vec<u32>`: each rollout contributes its state ids
//! followed by one terminal token (`TERMINAL | terminal id`). Actions never
//! move, so rollout `r` always carries the `r`-th action. A *shape* uses the
//! same layout with class ids in place of state ids.

use std::collections::HashMap;

use crate::model::{Population, Rollout, Schema, TaggedState, Tail, TerminalLabel};

use super::{Transform, TransformKind};

pub(crate) const TERMINAL: u32 = 1 << 31;

#[inline]
pub(crate) fn is_terminal(token: u32) -> bool {
    token & TERMINAL != 0
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncodedTransform {
    kind: TransformKind,
    a: u32,
    b: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct Codec {
    /// Action id of each rollout slot.
    rollout_actions: Vec<u32>,
    actions: Vec<crate::model::ActionLabel>,
    states: Vec<TaggedState>,
    state_class: Vec<u32>,
    terminals: Vec<TerminalLabel>,
    state_ids: HashMap<TaggedState, u32>,
}

impl Codec {
    pub(crate) fn new(p: &Population) -> Self {
        let mut actions = Vec::new();
        let mut rollout_actions = Vec::with_capacity(p.size());
        for r in p.rollouts() {
            let id = match actions.iter().position(|a| a == &r.action) {
                Some(i) => i,
                None => {
                    actions.push(r.action.clone());
                    actions.len() - 1
                }
            };
            rollout_actions.push(id as u32);
        }
        let states: Vec<TaggedState> = p.states().cloned().collect();
        let state_class = states.iter().map(|s| s.class.get()).collect();
        let state_ids = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Codec {
            rollout_actions,
            actions,
            states,
            state_class,
            terminals: p.terminals().cloned().collect(),
            state_ids,
        }
    }

    pub(crate) fn b(&self) -> usize {
        self.rollout_actions.len()
    }

    pub(crate) fn terminals(&self) -> &[TerminalLabel] {
        &self.terminals
    }

    pub(crate) fn rollout_actions(&self) -> &[u32] {
        &self.rollout_actions
    }

    /// Encodes a population over the same states and terminals.
    pub(crate) fn encode(&self, p: &Population) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.states.len() + self.b());
        for r in p.rollouts() {
            out.extend(r.states.iter().map(|s| self.state_ids[s]));
            let t = self
                .terminals
                .iter()
                .position(|t| t == &r.terminal)
                .expect("terminal outside codec") as u32;
            out.push(TERMINAL | t);
        }
        out
    }

    pub(crate) fn decode(&self, tokens: &[u32]) -> Population {
        let mut rollouts = Vec::with_capacity(self.b());
        let mut states = Vec::new();
        for &tok in tokens {
            if is_terminal(tok) {
                let action = self.actions[self.rollout_actions[rollouts.len()] as usize].clone();
                let terminal = self.terminals[(tok & !TERMINAL) as usize].clone();
                rollouts.push(Rollout::new(action, std::mem::take(&mut states), terminal));
            } else {
                states.push(self.states[tok as usize].clone());
            }
        }
        Population::from_rearranged(rollouts)
    }

    /// Replaces state ids with class ids.
    pub(crate) fn shape(&self, tokens: &[u32]) -> Vec<u32> {
        tokens
            .iter()
            .map(|&t| {
                if is_terminal(t) {
                    t
                } else {
                    self.state_class[t as usize]
                }
            })
            .collect()
    }

    pub(crate) fn encode_transform(&self, t: &Transform) -> Option<EncodedTransform> {
        match t {
            Transform::Identity => None,
            Transform::Cross {
                kind,
                class,
                tags: (c, d),
            } => {
                let a = *self.state_ids.get(&TaggedState::new(*class, c.clone()))?;
                let b = *self.state_ids.get(&TaggedState::new(*class, d.clone()))?;
                Some(EncodedTransform { kind: *kind, a, b })
            }
        }
    }

    pub(crate) fn compile(&self, h: &Schema) -> CompiledSchema {
        match h {
            Schema::Root => CompiledSchema::Root,
            Schema::Pattern {
                action,
                classes,
                tail,
            } => CompiledSchema::Pattern {
                action: self.actions.iter().position(|a| a == action).map(|i| i as u32),
                classes: classes.iter().map(|c| c.get()).collect(),
                terminals: match tail {
                    Tail::Wildcard => None,
                    Tail::Terminal(name) => Some(
                        self.terminals
                            .iter()
                            .enumerate()
                            .filter(|(_, t)| t.name() == name)
                            .map(|(i, _)| TERMINAL | i as u32)
                            .collect(),
                    ),
                },
            },
        }
    }

    pub(crate) fn class_of(&self, token: u32) -> u32 {
        self.state_class[token as usize]
    }
}

impl EncodedTransform {
    /// Applies the transform in place. Both ids are assumed present.
    pub(crate) fn apply(&self, v: &mut [u32]) {
        let pa = v.iter().position(|&t| t == self.a).expect("state id present");
        let pb = v.iter().position(|&t| t == self.b).expect("state id present");
        match self.kind {
            TransformKind::SingleSwap => v.swap(pa, pb),
            TransformKind::OnePoint => swap_suffixes(v, pa, pb),
        }
    }
}

fn rollout_end(v: &[u32], from: usize) -> usize {
    from + v[from..]
        .iter()
        .position(|&t| is_terminal(t))
        .expect("every rollout ends in a terminal")
}

/// Exchanges the suffixes starting at `pa` and `pb` (through their
/// terminals) unless both positions lie in the same rollout.
pub(crate) fn swap_suffixes(v: &mut [u32], pa: usize, pb: usize) {
    let (x, y) = if pa < pb { (pa, pb) } else { (pb, pa) };
    let ex = rollout_end(v, x);
    if ex >= y {
        return;
    }
    let ey = rollout_end(v, y);
    // [x..=ex] A, (ex..y) M, [y..=ey] B  ->  B M A
    let seg = &mut v[x..=ey];
    let (la, lm, lb) = (ex + 1 - x, y - ex - 1, ey + 1 - y);
    seg.reverse();
    seg[..lb].reverse();
    seg[lb..lb + lm].reverse();
    seg[lb + lm..lb + lm + la].reverse();
}

/// A schema resolved against a codec.
#[derive(Debug, Clone)]
pub(crate) enum CompiledSchema {
    Root,
    Pattern {
        /// `None` when the action never occurs.
        action: Option<u32>,
        classes: Vec<u32>,
        /// Acceptable terminal tokens, or `None` for `#`.
        terminals: Option<Vec<u32>>,
    },
}

impl CompiledSchema {
    /// Counts matching rollouts; `class_of` maps a state token to its class.
    pub(crate) fn count(
        &self,
        tokens: &[u32],
        rollout_actions: &[u32],
        class_of: impl Fn(u32) -> u32,
    ) -> u64 {
        let (action, classes, terminals) = match self {
            CompiledSchema::Root => return rollout_actions.len() as u64,
            CompiledSchema::Pattern {
                action: None, ..
            } => return 0,
            CompiledSchema::Pattern {
                action: Some(a),
                classes,
                terminals,
            } => (*a, classes, terminals),
        };
        let mut count = 0;
        let mut start = 0;
        let mut slot = 0;
        for (pos, &tok) in tokens.iter().enumerate() {
            if !is_terminal(tok) {
                continue;
            }
            if rollout_actions[slot] == action {
                let states = &tokens[start..pos];
                let prefix_ok = states.len() >= classes.len()
                    && states.iter().zip(classes).all(|(&s, &c)| class_of(s) == c);
                let ok = prefix_ok
                    && match terminals {
                        None => true,
                        Some(ts) => states.len() == classes.len() && ts.contains(&tok),
                    };
                if ok {
                    count += 1;
                }
            }
            start = pos + 1;
            slot += 1;
        }
        count
    }
}
