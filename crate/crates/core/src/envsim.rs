//! Toy partially observable environment and rollout simulator.
//!
//! Hidden states `0..n` sit behind an observation map onto class ids
//! `1..=|O|`. An action taken at the root or at a hidden state draws the next
//! hidden state (or termination) from a small categorical kernel, and the
//! rollout policy picks uniformly among the actions the observed class
//! exposes. Only observations reach the population: every state occurrence
//! gets a fresh tag and every rollout a fresh terminal.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ActionLabel, ClassId, PayoffMap, Population, Rollout, StateTag, TaggedState, TerminalLabel,
};
use crate::rational::from_int;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub states: usize,
    pub observations: usize,
    pub actions: usize,
    pub max_branching: usize,
    pub depth_cap: usize,
    pub payoff_min: i64,
    pub payoff_max: i64,
    pub rollouts: usize,
    pub seed: u64,
    /// Payoff of the terminal emitted when a rollout hits the depth cap.
    #[serde(default)]
    pub cap_payoff: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("action {0} is not available at the root")]
    UnknownAction(String),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.states == 0
            || self.observations == 0
            || self.actions == 0
            || self.max_branching == 0
            || self.depth_cap == 0
            || self.rollouts == 0
        {
            return bad("all counts must be positive");
        }
        if self.observations > self.states {
            return bad("more observations than hidden states");
        }
        if self.payoff_min > self.payoff_max {
            return bad("payoff_min exceeds payoff_max");
        }
        if self.states >= u32::MAX as usize / 2 {
            return bad("too many hidden states");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Next(usize),
    Stop,
}

/// Categorical distribution with positive integer weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    pub outcomes: Vec<(Outcome, u32)>,
}

impl Kernel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        let total: u32 = self.outcomes.iter().map(|(_, w)| w).sum();
        let mut x = rng.gen_range(0..total);
        for (o, w) in &self.outcomes {
            if x < *w {
                return *o;
            }
            x -= w;
        }
        unreachable!("weights sum to total")
    }

    /// Total weight of the stop outcome.
    pub fn stop_weight(&self) -> u32 {
        self.outcomes
            .iter()
            .filter(|(o, _)| *o == Outcome::Stop)
            .map(|(_, w)| w)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenState {
    pub class: u32,
    /// Payoff when a rollout terminates here.
    pub payoff: i64,
    /// Kernel per available action, keyed by action index.
    pub kernels: Vec<(usize, Kernel)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvModel {
    pub actions: Vec<String>,
    /// One root kernel per action.
    pub root: Vec<Kernel>,
    pub root_payoff: i64,
    pub states: Vec<HiddenState>,
    pub depth_cap: usize,
    pub cap_payoff: i64,
    pub seed: u64,
}

impl EnvModel {
    pub fn observation(&self, s: usize) -> ClassId {
        ClassId::new(self.states[s].class).expect("classes start at 1")
    }

    pub fn action_index(&self, a: &ActionLabel) -> Option<usize> {
        self.actions.iter().position(|x| x == a.as_str())
    }

    pub fn action_label(&self, i: usize) -> ActionLabel {
        ActionLabel::new(self.actions[i].clone()).expect("generated names are valid")
    }

    /// Checks the structural guarantees `make_random_pomdp` builds in.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.states.len();
        let mut by_class: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        for s in &self.states {
            let acts: Vec<usize> = s.kernels.iter().map(|(a, _)| *a).collect();
            if acts.is_empty() {
                return Err(format!("class {} exposes no action", s.class));
            }
            if let Some(prev) = by_class.insert(s.class, acts.clone()) {
                if prev != acts {
                    return Err(format!("class {} has inconsistent action sets", s.class));
                }
            }
        }
        let kernels = self
            .root
            .iter()
            .chain(self.states.iter().flat_map(|s| s.kernels.iter().map(|(_, k)| k)));
        for k in kernels {
            if k.outcomes.is_empty() || k.outcomes.iter().any(|(_, w)| *w == 0) {
                return Err("kernel with no mass".into());
            }
            if k.outcomes
                .iter()
                .any(|(o, _)| matches!(o, Outcome::Next(t) if *t >= n))
            {
                return Err("kernel points outside the state space".into());
            }
        }
        // termination is reachable from every hidden state
        let mut done = vec![false; n];
        loop {
            let mut changed = false;
            for (s, st) in self.states.iter().enumerate() {
                if done[s] {
                    continue;
                }
                let ok = st.kernels.iter().any(|(_, k)| {
                    k.outcomes.iter().any(|(o, _)| match o {
                        Outcome::Stop => true,
                        Outcome::Next(t) => done[*t],
                    })
                });
                if ok {
                    done[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        match done.iter().position(|d| !d) {
            Some(s) => Err(format!("state {s} cannot terminate")),
            None => Ok(()),
        }
    }
}

/// Draws a kernel with a progress outcome (stop, or a strictly later state
/// when `from` is given) plus up to `max_branching - 1` arbitrary outcomes.
fn random_kernel<R: Rng>(rng: &mut R, n: usize, from: Option<usize>, max_branching: usize) -> Kernel {
    let lo = from.map_or(0, |s| s + 1);
    let progress = if lo < n && rng.gen_bool(0.5) {
        Outcome::Next(rng.gen_range(lo..n))
    } else {
        Outcome::Stop
    };
    let mut outcomes = vec![(progress, rng.gen_range(1..=4))];
    for _ in 1..rng.gen_range(1..=max_branching) {
        let o = if rng.gen_bool(0.3) {
            Outcome::Stop
        } else {
            Outcome::Next(rng.gen_range(0..n))
        };
        if !outcomes.iter().any(|(x, _)| *x == o) {
            outcomes.push((o, rng.gen_range(1..=4)));
        }
    }
    Kernel { outcomes }
}

pub fn make_random_pomdp(cfg: &SimConfig) -> Result<EnvModel, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.states;
    // onto map: the first |O| states (after shuffling) cover every class
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut class = vec![0u32; n];
    for (k, &s) in order.iter().enumerate() {
        class[s] = if k < cfg.observations {
            k as u32 + 1
        } else {
            rng.gen_range(1..=cfg.observations as u32)
        };
    }
    let action_sets: Vec<Vec<usize>> = (0..cfg.observations)
        .map(|_| {
            let mut set: Vec<usize> = (0..cfg.actions).filter(|_| rng.gen_bool(0.5)).collect();
            if set.is_empty() {
                set.push(rng.gen_range(0..cfg.actions));
            }
            set
        })
        .collect();
    let mut payoff = || rng.gen_range(cfg.payoff_min..=cfg.payoff_max);
    let payoffs: Vec<i64> = (0..n).map(|_| payoff()).collect();
    let root_payoff = payoff();
    let root = (0..cfg.actions)
        .map(|_| random_kernel(&mut rng, n, None, cfg.max_branching))
        .collect();
    let states = (0..n)
        .map(|s| HiddenState {
            class: class[s],
            payoff: payoffs[s],
            kernels: action_sets[class[s] as usize - 1]
                .iter()
                .map(|&a| (a, random_kernel(&mut rng, n, Some(s), cfg.max_branching)))
                .collect(),
        })
        .collect();
    Ok(EnvModel {
        actions: (0..cfg.actions).map(|i| format!("a{i}")).collect(),
        root,
        root_payoff,
        states,
        depth_cap: cfg.depth_cap,
        cap_payoff: cfg.cap_payoff,
        seed: cfg.seed,
    })
}

/// Source of globally fresh tags and terminal names.
#[derive(Debug, Default)]
pub struct TagAllocator {
    next: AtomicU64,
}

impl TagAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh(&self) -> u64 {
        self.next.fetch_add(1, Ordering::Relaxed)
    }

    pub fn state_tag(&self) -> StateTag {
        StateTag::new(format!("s{}", self.fresh())).expect("valid tag")
    }

    pub fn terminal(&self, capped: bool) -> TerminalLabel {
        let prefix = if capped { "cap" } else { "t" };
        TerminalLabel::new(format!("{prefix}{}", self.fresh())).expect("valid terminal")
    }
}

/// Hidden-state record of one simulated rollout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub action: usize,
    pub states: Vec<usize>,
    pub capped: bool,
    pub payoff: i64,
}

pub fn simulate_trace<R: Rng + ?Sized>(env: &EnvModel, action: usize, rng: &mut R) -> Trace {
    let mut states = Vec::new();
    let mut kernel = &env.root[action];
    loop {
        match kernel.sample(rng) {
            Outcome::Stop => {
                let payoff = states
                    .last()
                    .map_or(env.root_payoff, |&s: &usize| env.states[s].payoff);
                return Trace { action, states, capped: false, payoff };
            }
            Outcome::Next(_) if states.len() == env.depth_cap => {
                return Trace { action, states, capped: true, payoff: env.cap_payoff };
            }
            Outcome::Next(s) => {
                states.push(s);
                let options = &env.states[s].kernels;
                kernel = &options[rng.gen_range(0..options.len())].1;
            }
        }
    }
}

fn label_trace(env: &EnvModel, t: &Trace, tags: &TagAllocator) -> Rollout {
    let states = t
        .states
        .iter()
        .map(|&s| TaggedState::new(env.observation(s), tags.state_tag()))
        .collect();
    Rollout::new(env.action_label(t.action), states, tags.terminal(t.capped))
}

pub fn simulate_rollout<R: Rng + ?Sized>(
    env: &EnvModel,
    action: &ActionLabel,
    rng: &mut R,
    tags: &TagAllocator,
) -> Result<Rollout, SimError> {
    let a = env
        .action_index(action)
        .ok_or_else(|| SimError::UnknownAction(action.to_string()))?;
    Ok(label_trace(env, &simulate_trace(env, a, rng), tags))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub population: Population,
    pub payoffs: PayoffMap,
    pub traces: Vec<Trace>,
}

impl Generated {
    pub fn capped(&self) -> usize {
        self.traces.iter().filter(|t| t.capped).count()
    }
}

/// One rollout per entry of `actions`, in order. Rollout `i` draws from its
/// own ChaCha stream, so traces are simulated in parallel; tags are then
/// assigned in sequence order.
pub fn generate_population(
    env: &EnvModel,
    actions: &[ActionLabel],
    seed: u64,
) -> Result<Generated, SimError> {
    if actions.is_empty() {
        return Err(SimError::InvalidConfig("empty action sequence".into()));
    }
    let idx: Vec<usize> = actions
        .iter()
        .map(|a| env.action_index(a).ok_or_else(|| SimError::UnknownAction(a.to_string())))
        .collect::<Result<_, _>>()?;
    let traces: Vec<Trace> = idx
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            simulate_trace(env, a, &mut rng)
        })
        .collect();
    let tags = TagAllocator::new();
    let mut payoffs = PayoffMap::new();
    let rollouts = traces
        .iter()
        .map(|t| {
            let r = label_trace(env, t, &tags);
            payoffs.insert(r.terminal.name(), from_int(t.payoff));
            r
        })
        .collect();
    let population = Population::new(rollouts).expect("fresh tags and terminals");
    Ok(Generated { population, payoffs, traces })
}

/// The action sequence `gen` uses: actions cycled over `cfg.rollouts` entries.
pub fn cycled_actions(env: &EnvModel, count: usize) -> Vec<ActionLabel> {
    (0..count)
        .map(|i| env.action_label(i % env.actions.len()))
        .collect()
}
