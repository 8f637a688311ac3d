//! Similarity-class digraph and the random-walk ("bug") action evaluator.
//!
//! Nodes are actions (sources), similarity classes and terminal labels
//! (sinks). Every observed succession in an ingested rollout adds 1 to the
//! corresponding edge, so after ingesting a population the edge `i → j`
//! carries `Order(i↓j)`. A bug starting at an action moves to a successor
//! with probability proportional to the edge weight until it hits a
//! terminal, then folds that terminal's payoff into the action's running
//! mean.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{ActionLabel, ClassId, PayoffMap, Population, Rollout, TerminalLabel};
use crate::rational::{self, ratio, Rational};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Action(ActionLabel),
    Class(ClassId),
    Terminal(TerminalLabel),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Action(a) => write!(f, "{a}"),
            Node::Class(c) => write!(f, "c{c}"),
            Node::Terminal(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeightedDigraph {
    edges: BTreeMap<Node, BTreeMap<Node, u64>>,
    nodes: BTreeSet<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphFormatError {
    #[error("malformed digraph json: {0}")]
    Malformed(String),
    #[error("edge endpoint {0:?} is not a declared node")]
    UnknownNode(String),
    #[error("node name {0:?} is both an action and a class")]
    Ambiguous(String),
    #[error("edge {0} -> {1} must have positive weight")]
    ZeroWeight(String, String),
}

impl WeightedDigraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn bump(&mut self, from: Node, to: Node, by: u64) {
        self.nodes.insert(from.clone());
        self.nodes.insert(to.clone());
        *self.edges.entry(from).or_default().entry(to).or_insert(0) += by;
    }

    /// Adds 1 to every succession along the rollout, creating nodes and
    /// edges on first sight.
    pub fn ingest(&mut self, r: &Rollout) {
        let mut prev = Node::Action(r.action.clone());
        for s in &r.states {
            let next = Node::Class(s.class);
            self.bump(prev, next.clone(), 1);
            prev = next;
        }
        self.bump(prev, Node::Terminal(r.terminal.clone()), 1);
    }

    pub fn weight(&self, from: &Node, to: &Node) -> u64 {
        self.edges
            .get(from)
            .and_then(|m| m.get(to).copied())
            .unwrap_or(0)
    }

    pub fn successors(&self, from: &Node) -> impl Iterator<Item = (&Node, u64)> {
        self.edges
            .get(from)
            .into_iter()
            .flat_map(|m| m.iter().map(|(n, w)| (n, *w)))
    }

    pub fn out_weight(&self, from: &Node) -> u64 {
        self.successors(from).map(|(_, w)| w).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Node, &Node, u64)> {
        self.edges
            .iter()
            .flat_map(|(a, m)| m.iter().map(move |(b, w)| (a, b, *w)))
    }

    pub fn nodes(&self) -> &BTreeSet<Node> {
        &self.nodes
    }

    pub fn contains(&self, n: &Node) -> bool {
        self.nodes.contains(n)
    }

    pub fn actions(&self) -> Vec<ActionLabel> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Action(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn terminals(&self) -> Vec<TerminalLabel> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Terminal(t) => Some(t.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        let mut actions = Vec::new();
        let mut classes = Vec::new();
        let mut terminals = Vec::new();
        for n in &self.nodes {
            match n {
                Node::Action(_) => actions.push(n.to_string()),
                Node::Class(_) => classes.push(n.to_string()),
                Node::Terminal(_) => terminals.push(n.to_string()),
            }
        }
        let edges: Vec<Value> = self
            .edges()
            .map(|(a, b, w)| json!([a.to_string(), b.to_string(), w]))
            .collect();
        json!({
            "nodes": { "actions": actions, "classes": classes, "terminals": terminals },
            "edges": edges,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, GraphFormatError> {
        let bad = |m: &str| GraphFormatError::Malformed(m.to_string());
        let list = |key: &str| -> Result<Vec<String>, GraphFormatError> {
            v["nodes"][key]
                .as_array()
                .ok_or_else(|| bad(&format!("nodes.{key} must be an array")))?
                .iter()
                .map(|x| {
                    x.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| bad("node names must be strings"))
                })
                .collect()
        };
        let mut by_name: HashMap<String, Node> = HashMap::new();
        let mut g = WeightedDigraph::new();
        for a in list("actions")? {
            let label = ActionLabel::new(&a).map_err(|e| bad(&e.to_string()))?;
            g.nodes.insert(Node::Action(label.clone()));
            by_name.insert(a, Node::Action(label));
        }
        let mut class_names = HashMap::new();
        for c in list("classes")? {
            let id = c
                .strip_prefix('c')
                .and_then(|d| d.parse::<u32>().ok())
                .and_then(|d| ClassId::new(d).ok())
                .ok_or_else(|| bad(&format!("class node {c:?} must look like c<id>")))?;
            if by_name.contains_key(&c) {
                return Err(GraphFormatError::Ambiguous(c));
            }
            g.nodes.insert(Node::Class(id));
            class_names.insert(c, Node::Class(id));
        }
        let mut terminal_names = HashMap::new();
        for t in list("terminals")? {
            let label = TerminalLabel::parse(&t).map_err(|e| bad(&e.to_string()))?;
            g.nodes.insert(Node::Terminal(label.clone()));
            terminal_names.insert(t, Node::Terminal(label));
        }
        let edges = v["edges"]
            .as_array()
            .ok_or_else(|| bad("edges must be an array"))?;
        for e in edges {
            let triple = e
                .as_array()
                .filter(|t| t.len() == 3)
                .ok_or_else(|| bad("edges are [from, to, weight] triples"))?;
            let from = triple[0].as_str().ok_or_else(|| bad("edge source"))?;
            let to = triple[1].as_str().ok_or_else(|| bad("edge target"))?;
            let w = triple[2].as_u64().ok_or_else(|| bad("edge weight"))?;
            let src = by_name
                .get(from)
                .or_else(|| class_names.get(from))
                .ok_or_else(|| GraphFormatError::UnknownNode(from.to_string()))?;
            let dst = class_names
                .get(to)
                .or_else(|| terminal_names.get(to))
                .ok_or_else(|| GraphFormatError::UnknownNode(to.to_string()))?;
            if w == 0 {
                return Err(GraphFormatError::ZeroWeight(from.into(), to.into()));
            }
            g.bump(src.clone(), dst.clone(), w);
        }
        Ok(g)
    }
}

pub fn ingest_rollout(mut g: WeightedDigraph, r: &Rollout) -> WeightedDigraph {
    g.ingest(r);
    g
}

pub fn build_digraph(p: &Population) -> WeightedDigraph {
    p.rollouts().iter().fold(WeightedDigraph::new(), ingest_rollout)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalkError {
    #[error("no outgoing edges from {0}")]
    NoData(String),
    #[error("walk did not reach a terminal within {0} steps")]
    CapExceeded(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkOutcome {
    pub start: ActionLabel,
    pub terminal: TerminalLabel,
    /// Edges traversed.
    pub length: u64,
}

/// Immutable snapshot of a digraph indexed for sampling.
#[derive(Debug, Clone)]
pub struct WalkTable {
    nodes: Vec<Node>,
    index: HashMap<Node, usize>,
    /// Successors with cumulative weights.
    succ: Vec<Vec<(usize, u64)>>,
}

impl WalkTable {
    pub fn new(g: &WeightedDigraph) -> Self {
        let nodes: Vec<Node> = g.nodes.iter().cloned().collect();
        let index: HashMap<Node, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let succ = nodes
            .iter()
            .map(|n| {
                let mut acc = 0;
                g.successors(n)
                    .map(|(m, w)| {
                        acc += w;
                        (index[m], acc)
                    })
                    .collect()
            })
            .collect();
        WalkTable { nodes, index, succ }
    }

    fn start_index(&self, action: &ActionLabel) -> Result<usize, WalkError> {
        self.index
            .get(&Node::Action(action.clone()))
            .copied()
            .filter(|&i| !self.succ[i].is_empty())
            .ok_or_else(|| WalkError::NoData(action.to_string()))
    }

    /// Returns the terminal node index and the number of steps taken.
    fn run<R: Rng + ?Sized>(
        &self,
        start: usize,
        cap: u64,
        rng: &mut R,
    ) -> Result<(usize, u64), WalkError> {
        let mut at = start;
        let mut steps = 0;
        loop {
            let out = &self.succ[at];
            if matches!(self.nodes[at], Node::Terminal(_)) {
                return Ok((at, steps));
            }
            if out.is_empty() {
                return Err(WalkError::NoData(self.nodes[at].to_string()));
            }
            if steps >= cap {
                return Err(WalkError::CapExceeded(cap));
            }
            let total = out[out.len() - 1].1;
            let x = rng.gen_range(0..total);
            let k = out.partition_point(|&(_, c)| c <= x);
            at = out[k].0;
            steps += 1;
        }
    }

    pub fn walk<R: Rng + ?Sized>(
        &self,
        start: &ActionLabel,
        cap: u64,
        rng: &mut R,
    ) -> Result<WalkOutcome, WalkError> {
        let (end, length) = self.run(self.start_index(start)?, cap, rng)?;
        let Node::Terminal(terminal) = &self.nodes[end] else {
            unreachable!("walks stop at terminals")
        };
        Ok(WalkOutcome {
            start: start.clone(),
            terminal: terminal.clone(),
            length,
        })
    }
}

pub fn walk<R: Rng + ?Sized>(
    g: &WeightedDigraph,
    start: &ActionLabel,
    cap: u64,
    rng: &mut R,
) -> Result<WalkOutcome, WalkError> {
    WalkTable::new(g).walk(start, cap, rng)
}

/// Running-mean payoff estimate of one action.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QEntry {
    pub q: f64,
    pub n: u64,
    /// Sum of squared deviations from the running mean.
    m2: f64,
}

impl QEntry {
    /// `Q := n/(n+1)·Q + v/(n+1)`, then `n := n+1`.
    pub fn update(&mut self, payoff: f64) {
        let n = self.n as f64;
        let delta = payoff - self.q;
        self.q = n / (n + 1.0) * self.q + payoff / (n + 1.0);
        self.m2 += delta * (payoff - self.q);
        self.n += 1;
    }

    /// Combines two disjoint samples.
    pub fn merge(&mut self, other: &QEntry) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.q - self.q;
        self.q = (na * self.q + nb * other.q) / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.n += other.n;
    }

    /// Sample standard deviation (0 for fewer than two samples).
    pub fn stddev(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            self.stddev() / (self.n as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable(BTreeMap<ActionLabel, QEntry>);

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update_q(&mut self, action: &ActionLabel, payoff: f64) {
        self.0.entry(action.clone()).or_default().update(payoff);
    }

    pub fn get(&self, action: &ActionLabel) -> Option<&QEntry> {
        self.0.get(action)
    }

    pub fn q(&self, action: &ActionLabel) -> Option<f64> {
        self.get(action).filter(|e| e.n > 0).map(|e| e.q)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ActionLabel, &QEntry)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn merge(&mut self, other: &QTable) {
        for (a, e) in &other.0 {
            self.0.entry(a.clone()).or_default().merge(e);
        }
    }
}

pub fn update_q(mut q: QTable, action: &ActionLabel, payoff: f64) -> QTable {
    q.update_q(action, payoff);
    q
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error("no payoff for terminal {0}")]
    MissingPayoff(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionTally {
    /// Completed walks per terminal reached.
    pub hits: BTreeMap<TerminalLabel, u64>,
    pub cap_exceeded: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub q: QTable,
    pub tallies: BTreeMap<ActionLabel, ActionTally>,
}

impl Evaluation {
    /// Exact mean payoff of the completed walks, recomputed from the hit
    /// counts.
    pub fn exact_mean(&self, action: &ActionLabel, payoffs: &PayoffMap) -> Option<Rational> {
        let t = self.tallies.get(action)?;
        let n: u64 = t.hits.values().sum();
        if n == 0 {
            return None;
        }
        let total: Rational = t
            .hits
            .iter()
            .map(|(term, k)| payoffs.get(term).cloned().unwrap_or_else(Rational::zero) * ratio(*k, 1))
            .sum();
        Some(total / ratio(n, 1))
    }
}

/// Walks per independently seeded chunk.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub walks: u64,
    pub cap: u64,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
}

/// Runs `walks` independent bugs from every action (duplicates merged).
///
/// Walk `k` of action `a` draws from a ChaCha stream fixed by the seed, the
/// action's position and `k / CHUNK`, and chunks are combined in a fixed
/// order, so the result does not depend on the number of workers.
pub fn evaluate_actions(
    g: &WeightedDigraph,
    actions: &[ActionLabel],
    payoffs: &PayoffMap,
    cfg: EvalConfig,
) -> Result<Evaluation, EvalError> {
    let mut unique: Vec<ActionLabel> = Vec::new();
    for a in actions {
        if !unique.contains(a) {
            unique.push(a.clone());
        }
    }
    let table = WalkTable::new(g);
    let starts: Vec<usize> = unique
        .iter()
        .map(|a| table.start_index(a))
        .collect::<Result<_, _>>()?;
    let terminals = g.terminals();
    let missing = payoffs.missing(&terminals);
    if let Some(name) = missing.into_iter().next() {
        return Err(EvalError::MissingPayoff(name));
    }
    let value: Vec<f64> = table
        .nodes
        .iter()
        .map(|n| match n {
            Node::Terminal(t) => rational::to_f64(payoffs.get(t).expect("checked above")),
            _ => f64::NAN,
        })
        .collect();

    let chunks_per_action = cfg.walks.div_ceil(CHUNK);
    let jobs: Vec<(usize, u64)> = (0..unique.len())
        .flat_map(|a| (0..chunks_per_action).map(move |c| (a, c)))
        .collect();
    let run_chunk = |&(a, c): &(usize, u64)| -> (QEntry, BTreeMap<usize, u64>, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(((a as u64) << 32) | c);
        let n = CHUNK.min(cfg.walks - c * CHUNK);
        let mut entry = QEntry::default();
        let mut hits = BTreeMap::new();
        let mut capped = 0;
        for _ in 0..n {
            match table.run(starts[a], cfg.cap, &mut rng) {
                Ok((end, _)) => {
                    entry.update(value[end]);
                    *hits.entry(end).or_insert(0) += 1;
                }
                Err(WalkError::CapExceeded(_)) => capped += 1,
                Err(WalkError::NoData(_)) => unreachable!("start nodes checked"),
            }
        }
        (entry, hits, capped)
    };
    let results: Vec<_> = if cfg.workers == 1 {
        jobs.iter().map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .expect("thread pool");
        pool.install(|| jobs.par_iter().map(run_chunk).collect())
    };

    let mut q = QTable::new();
    let mut tallies: BTreeMap<ActionLabel, ActionTally> = BTreeMap::new();
    for ((a, _), (entry, hits, capped)) in jobs.iter().zip(results) {
        let action = &unique[*a];
        q.0.entry(action.clone()).or_default().merge(&entry);
        let tally = tallies.entry(action.clone()).or_default();
        tally.cap_exceeded += capped;
        for (node, k) in hits {
            let Node::Terminal(t) = &table.nodes[node] else {
                unreachable!()
            };
            *tally.hits.entry(t.clone()).or_insert(0) += k;
        }
    }
    Ok(Evaluation { q, tallies })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExactError {
    #[error("no outgoing edges from {0}")]
    NoData(String),
    #[error("node {0} is reachable but cannot reach a terminal")]
    Unsolvable(String),
    #[error("no payoff for terminal {0}")]
    MissingPayoff(String),
}

/// Expected terminal payoff of a walk from `action`, solved exactly as an
/// absorbing chain: `E_i = Σ_j (w_ij/W_i)·E_j + Σ_f (w_if/W_i)·φ(f)`.
pub fn exact_expected_payoff(
    g: &WeightedDigraph,
    action: &ActionLabel,
    payoffs: &PayoffMap,
) -> Result<Rational, ExactError> {
    let start = Node::Action(action.clone());
    if g.out_weight(&start) == 0 {
        return Err(ExactError::NoData(action.to_string()));
    }
    // nodes reachable from the start
    let mut reach: BTreeSet<&Node> = BTreeSet::new();
    let mut queue = VecDeque::from([&start]);
    while let Some(n) = queue.pop_front() {
        for (m, _) in g.successors(n) {
            if reach.insert(m) {
                queue.push_back(m);
            }
        }
    }
    for n in &reach {
        if let Node::Terminal(t) = n {
            if payoffs.get(t).is_none() {
                return Err(ExactError::MissingPayoff(t.name().to_string()));
            }
        }
    }
    // reachable classes that can reach a terminal
    let classes: Vec<&Node> = reach
        .iter()
        .copied()
        .filter(|n| matches!(n, Node::Class(_)))
        .collect();
    let mut good: BTreeSet<&Node> = reach
        .iter()
        .copied()
        .filter(|n| matches!(n, Node::Terminal(_)))
        .collect();
    loop {
        let before = good.len();
        for c in &classes {
            if !good.contains(c) && g.successors(c).any(|(m, _)| good.contains(m)) {
                good.insert(c);
            }
        }
        if good.len() == before {
            break;
        }
    }
    if let Some(bad) = classes.iter().find(|c| !good.contains(*c)) {
        return Err(ExactError::Unsolvable(bad.to_string()));
    }

    let idx: HashMap<&Node, usize> = classes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = classes.len();
    // rows: W_i·E_i − Σ_j w_ij·E_j = Σ_f w_if·φ(f)
    let mut a = vec![vec![Rational::zero(); n + 1]; n];
    for (i, c) in classes.iter().enumerate() {
        a[i][i] += ratio(g.out_weight(c), 1);
        for (m, w) in g.successors(c) {
            let w = ratio(w, 1);
            match m {
                Node::Class(_) => a[i][idx[m]] -= w,
                Node::Terminal(t) => a[i][n] += w * payoffs.get(t).expect("checked"),
                Node::Action(_) => unreachable!("actions have no incoming edges"),
            }
        }
    }
    let e = solve(a).ok_or_else(|| ExactError::Unsolvable(action.to_string()))?;
    let total = ratio(g.out_weight(&start), 1);
    let mut value = Rational::zero();
    for (m, w) in g.successors(&start) {
        let v = match m {
            Node::Class(_) => e[idx[m]].clone(),
            Node::Terminal(t) => payoffs.get(t).expect("checked").clone(),
            Node::Action(_) => unreachable!(),
        };
        value += ratio(w, 1) * v;
    }
    Ok(value / total)
}

/// Gauss-Jordan elimination on an augmented `n × (n+1)` matrix.
fn solve(mut a: Vec<Vec<Rational>>) -> Option<Vec<Rational>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let inv = Rational::one() / &a[col][col];
        for x in a[col].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for k in col..=n {
                    let d = &f * &a[col][k];
                    a[r][k] -= d;
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n].clone()).collect())
}

/// Exact probability that a walk from `action` visits exactly `classes` and
/// then stops at a terminal named `terminal`.
pub fn path_probability(
    g: &WeightedDigraph,
    action: &ActionLabel,
    classes: &[ClassId],
    terminal: &str,
) -> Rational {
    let mut at = Node::Action(action.clone());
    let mut p = Rational::one();
    for c in classes {
        let next = Node::Class(*c);
        let w = g.weight(&at, &next);
        if w == 0 {
            return Rational::zero();
        }
        p *= ratio(w, g.out_weight(&at));
        at = next;
    }
    let hit: u64 = g
        .successors(&at)
        .filter(|(m, _)| matches!(m, Node::Terminal(t) if t.name() == terminal))
        .map(|(_, w)| w)
        .sum();
    if hit == 0 {
        return Rational::zero();
    }
    p * ratio(hit, g.out_weight(&at))
}
