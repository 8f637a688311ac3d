//! Rollouts, populations and Holland-Poli schemata.
//!
//! A rollout is an action followed by a sequence of tagged states and a
//! terminal label. States are written `(class, tag)`: the class is what the
//! agent observes, the tag only keeps otherwise equivalent states formally
//! apart. A [`Population`] is an ordered sample of rollouts in which every
//! state occurrence and every terminal label is distinct.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("class ids start at 1, got {0}")]
    InvalidClassId(u64),
    #[error("invalid {kind} label {value:?}")]
    InvalidLabel { kind: &'static str, value: String },
}

/// Observable equivalence class of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(u32);

impl ClassId {
    pub fn new(id: u32) -> Result<Self, ModelError> {
        if id == 0 {
            Err(ModelError::InvalidClassId(0))
        } else {
            Ok(ClassId(id))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Distinguishing letter of a state within its class. `copy` is non-zero only
/// for states produced by [`inflate`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateTag {
    pub name: String,
    pub copy: u32,
}

impl StateTag {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        Self::with_copy(name, 0)
    }

    pub fn with_copy(name: impl Into<String>, copy: u32) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::InvalidLabel {
                kind: "tag",
                value: name,
            });
        }
        Ok(StateTag { name, copy })
    }
}

impl fmt::Display for StateTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.copy == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}:{}", self.name, self.copy)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaggedState {
    pub class: ClassId,
    pub tag: StateTag,
}

impl TaggedState {
    pub fn new(class: ClassId, tag: StateTag) -> Self {
        TaggedState { class, tag }
    }
}

impl fmt::Display for TaggedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.class, self.tag)
    }
}

fn plain_symbol(s: &str) -> bool {
    !s.is_empty()
        && s != "#"
        && !s.chars().any(|c| c.is_whitespace() || c == ',' || c == ':')
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionLabel(String);

impl ActionLabel {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if plain_symbol(&name) {
            Ok(ActionLabel(name))
        } else {
            Err(ModelError::InvalidLabel {
                kind: "action",
                value: name,
            })
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Terminal label. Labels with the same `name` and different `copy` denote
/// the same outcome over an alphabet extended by inflation; they are
/// distinct labels but share a payoff and match the same schema tail.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TerminalLabel {
    name: String,
    copy: u32,
}

impl TerminalLabel {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        Self::with_copy(name, 0)
    }

    pub fn with_copy(name: impl Into<String>, copy: u32) -> Result<Self, ModelError> {
        let name = name.into();
        if !valid_terminal_name(&name) {
            return Err(ModelError::InvalidLabel {
                kind: "terminal",
                value: name,
            });
        }
        Ok(TerminalLabel { name, copy })
    }

    /// Parses the rendered form `name` or `name:copy`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        match text.split_once(':') {
            None => Self::new(text),
            Some((name, copy)) => {
                let copy = copy.parse().map_err(|_| ModelError::InvalidLabel {
                    kind: "terminal",
                    value: text.to_string(),
                })?;
                Self::with_copy(name, copy)
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn copy(&self) -> u32 {
        self.copy
    }
}

pub(crate) fn valid_terminal_name(name: &str) -> bool {
    plain_symbol(name) && !name.chars().all(|c| c.is_ascii_digit())
}

impl fmt::Display for TerminalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.copy == 0 {
            f.write_str(&self.name)
        } else {
            write!(f, "{}:{}", self.name, self.copy)
        }
    }
}

/// Payoff of each terminal outcome, keyed by terminal name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PayoffMap(BTreeMap<String, Rational>);

impl PayoffMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Rational) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, terminal: &TerminalLabel) -> Option<&Rational> {
        self.0.get(terminal.name())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Rational)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Terminal names of `terminals` without a payoff.
    pub fn missing<'a>(
        &self,
        terminals: impl IntoIterator<Item = &'a TerminalLabel>,
    ) -> BTreeSet<String> {
        terminals
            .into_iter()
            .filter(|t| self.get(t).is_none())
            .map(|t| t.name().to_string())
            .collect()
    }
}

impl FromIterator<(String, Rational)> for PayoffMap {
    fn from_iter<I: IntoIterator<Item = (String, Rational)>>(iter: I) -> Self {
        PayoffMap(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rollout {
    pub action: ActionLabel,
    pub states: Vec<TaggedState>,
    pub terminal: TerminalLabel,
}

impl Rollout {
    pub fn new(action: ActionLabel, states: Vec<TaggedState>, terminal: TerminalLabel) -> Self {
        Rollout {
            action,
            states,
            terminal,
        }
    }

    /// Number of states between the action and the terminal.
    pub fn height(&self) -> usize {
        self.states.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.states.iter().map(|s| s.class)
    }
}

impl fmt::Display for Rollout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.action)?;
        for s in &self.states {
            write!(f, ",{}{}", s.class, s.tag)?;
        }
        write!(f, ",{})", self.terminal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("population has no rollouts")]
    EmptyPopulation,
    #[error("state {state} occurs more than once (rollouts {rollouts:?})")]
    DuplicateState {
        state: TaggedState,
        rollouts: Vec<usize>,
    },
    #[error("terminal {terminal} occurs more than once (rollouts {rollouts:?})")]
    DuplicateTerminal {
        terminal: TerminalLabel,
        rollouts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid population: {}", render_violations(.violations))]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

fn render_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A validated, immutable population of rollouts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Population {
    rollouts: Vec<Rollout>,
}

/// Checks both distinctness invariants and reports every violation, each
/// with the (0-based) indices of the rollouts involved.
pub fn validate_population(rollouts: Vec<Rollout>) -> Result<Population, ValidationError> {
    if rollouts.is_empty() {
        return Err(ValidationError {
            violations: vec![Violation::EmptyPopulation],
        });
    }
    let mut states: BTreeMap<&TaggedState, Vec<usize>> = BTreeMap::new();
    let mut terminals: BTreeMap<&TerminalLabel, Vec<usize>> = BTreeMap::new();
    for (idx, r) in rollouts.iter().enumerate() {
        for s in &r.states {
            states.entry(s).or_default().push(idx);
        }
        terminals.entry(&r.terminal).or_default().push(idx);
    }
    let mut violations: Vec<Violation> = states
        .into_iter()
        .filter(|(_, at)| at.len() > 1)
        .map(|(s, at)| Violation::DuplicateState {
            state: s.clone(),
            rollouts: at,
        })
        .collect();
    violations.extend(
        terminals
            .into_iter()
            .filter(|(_, at)| at.len() > 1)
            .map(|(t, at)| Violation::DuplicateTerminal {
                terminal: t.clone(),
                rollouts: at,
            }),
    );
    if violations.is_empty() {
        Ok(Population { rollouts })
    } else {
        Err(ValidationError { violations })
    }
}

impl Population {
    pub fn new(rollouts: Vec<Rollout>) -> Result<Self, ValidationError> {
        validate_population(rollouts)
    }

    pub fn rollouts(&self) -> &[Rollout] {
        &self.rollouts
    }

    /// Population size `b`.
    pub fn size(&self) -> usize {
        self.rollouts.len()
    }

    pub fn into_rollouts(self) -> Vec<Rollout> {
        self.rollouts
    }

    /// Transforms in this crate rearrange states without creating or
    /// duplicating any, so they may rebuild a population unchecked.
    pub(crate) fn from_rearranged(rollouts: Vec<Rollout>) -> Self {
        debug_assert!(validate_population(rollouts.clone()).is_ok());
        Population { rollouts }
    }

    pub fn states(&self) -> impl Iterator<Item = &TaggedState> {
        self.rollouts.iter().flat_map(|r| r.states.iter())
    }

    pub fn terminals(&self) -> impl Iterator<Item = &TerminalLabel> {
        self.rollouts.iter().map(|r| &r.terminal)
    }

    /// Distinct actions in order of first appearance.
    pub fn actions(&self) -> Vec<ActionLabel> {
        let mut seen = BTreeSet::new();
        self.rollouts
            .iter()
            .filter(|r| seen.insert(&r.action))
            .map(|r| r.action.clone())
            .collect()
    }

    pub fn classes(&self) -> BTreeSet<ClassId> {
        self.states().map(|s| s.class).collect()
    }

    /// Terminal names present, sorted.
    pub fn terminal_names(&self) -> BTreeSet<String> {
        self.terminals().map(|t| t.name().to_string()).collect()
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rollouts.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// True iff equivalent states never sit at different heights.
pub fn is_homologous(p: &Population) -> bool {
    let mut position: BTreeMap<ClassId, usize> = BTreeMap::new();
    p.rollouts.iter().all(|r| {
        r.states
            .iter()
            .enumerate()
            .all(|(pos, s)| *position.entry(s.class).or_insert(pos) == pos)
    })
}

/// m-plicates every rollout over an alphabet extended by a factor of `m`.
///
/// Copies of a rollout are adjacent; copy `k` of a state or terminal with
/// copy index `c` gets copy index `c * m + k`, so inflating twice composes
/// and `inflate(p, 1) == p`.
pub fn inflate(p: &Population, m: u32) -> Population {
    assert!(m >= 1, "inflation factor must be positive");
    let mut rollouts = Vec::with_capacity(p.size() * m as usize);
    for r in &p.rollouts {
        for k in 0..m {
            let states = r
                .states
                .iter()
                .map(|s| TaggedState {
                    class: s.class,
                    tag: StateTag {
                        name: s.tag.name.clone(),
                        copy: s.tag.copy * m + k,
                    },
                })
                .collect();
            let terminal = TerminalLabel {
                name: r.terminal.name.clone(),
                copy: r.terminal.copy * m + k,
            };
            rollouts.push(Rollout::new(r.action.clone(), states, terminal));
        }
    }
    Population::from_rearranged(rollouts)
}

/// Last entry of a schema: a terminal name or the `#` wildcard.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tail {
    Wildcard,
    Terminal(String),
}

/// Holland-Poli rollout schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Schema {
    /// The bare `#`, matching every rollout.
    Root,
    Pattern {
        action: ActionLabel,
        classes: Vec<ClassId>,
        tail: Tail,
    },
}

impl Schema {
    pub fn wildcard(action: ActionLabel, classes: Vec<ClassId>) -> Self {
        Schema::Pattern {
            action,
            classes,
            tail: Tail::Wildcard,
        }
    }

    pub fn terminal(
        action: ActionLabel,
        classes: Vec<ClassId>,
        terminal: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let terminal = terminal.into();
        if !valid_terminal_name(&terminal) {
            return Err(ModelError::InvalidLabel {
                kind: "terminal",
                value: terminal,
            });
        }
        Ok(Schema::Pattern {
            action,
            classes,
            tail: Tail::Terminal(terminal),
        })
    }

    /// Number of classes spelled out by the schema.
    pub fn height(&self) -> usize {
        match self {
            Schema::Root => 0,
            Schema::Pattern { classes, .. } => classes.len(),
        }
    }

    pub fn is_wildcard_tailed(&self) -> bool {
        matches!(
            self,
            Schema::Root
                | Schema::Pattern {
                    tail: Tail::Wildcard,
                    ..
                }
        )
    }

    /// Does `r` fit this schema?
    ///
    /// A terminal tail requires exactly the listed classes and then a terminal
    /// of that name; `#` accepts zero or more further states and any terminal.
    pub fn matches(&self, r: &Rollout) -> bool {
        match self {
            Schema::Root => true,
            Schema::Pattern {
                action,
                classes,
                tail,
            } => {
                if &r.action != action || r.states.len() < classes.len() {
                    return false;
                }
                if !r.classes().zip(classes).all(|(have, want)| have == *want) {
                    return false;
                }
                match tail {
                    Tail::Wildcard => true,
                    Tail::Terminal(name) => {
                        r.states.len() == classes.len() && r.terminal.name() == name
                    }
                }
            }
        }
    }
}

pub fn schema_match(h: &Schema, r: &Rollout) -> bool {
    h.matches(r)
}

/// Number of rollouts in `p` that fit `h`.
pub fn schema_count(h: &Schema, p: &Population) -> usize {
    p.rollouts.iter().filter(|r| h.matches(r)).count()
}
