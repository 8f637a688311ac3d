//! Population files and canonical JSON.
//!
//! ```json
//! {
//!   "payoffs": {"f1": "1/1", "f2": "0/1"},
//!   "rollouts": [
//!     {"action": "alpha", "states": [[1, "a"], [2, "a"]], "terminal": "f1"}
//!   ]
//! }
//! ```
//!
//! A state is `[class, tag]`, or `[class, tag, copy]` for inflated copies.
//! Payoffs may be written as `"p/q"` strings or JSON integers and are always
//! written back as strings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::envsim::SimConfig;
use crate::model::{
    ActionLabel, ClassId, PayoffMap, Population, Rollout, Schema, StateTag, TaggedState,
    TerminalLabel, ValidationError,
};
use crate::rational::{self, from_int};
use crate::syntax::parse_schema_list;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationFile {
    pub population: Population,
    pub payoffs: PayoffMap,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    #[serde(default)]
    payoffs: BTreeMap<String, RawNumber>,
    rollouts: Vec<RawRollout>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Text(String),
    Int(i64),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRollout {
    action: String,
    states: Vec<RawState>,
    terminal: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawState {
    Plain(u32, String),
    Copy(u32, String, u32),
}

fn raw_from(file: &PopulationFile) -> RawPopulation {
    RawPopulation {
        payoffs: file
            .payoffs
            .iter()
            .map(|(k, v)| (k.clone(), RawNumber::Text(rational::format(v))))
            .collect(),
        rollouts: file
            .population
            .rollouts()
            .iter()
            .map(|r| RawRollout {
                action: r.action.to_string(),
                states: r
                    .states
                    .iter()
                    .map(|s| match s.tag.copy {
                        0 => RawState::Plain(s.class.get(), s.tag.name.clone()),
                        c => RawState::Copy(s.class.get(), s.tag.name.clone(), c),
                    })
                    .collect(),
                terminal: r.terminal.to_string(),
            })
            .collect(),
    }
}

enum Bad {
    Label(String),
    Invalid(ValidationError),
}

impl From<String> for Bad {
    fn from(m: String) -> Self {
        Bad::Label(m)
    }
}

fn file_from(raw: RawPopulation) -> Result<PopulationFile, Bad> {
    let mut payoffs = PayoffMap::new();
    for (name, v) in raw.payoffs {
        TerminalLabel::new(name.clone()).map_err(|e| e.to_string())?;
        let value = match v {
            RawNumber::Text(t) => rational::parse(&t).map_err(|e| e.to_string())?,
            RawNumber::Int(i) => from_int(i),
        };
        payoffs.insert(name, value);
    }
    let mut rollouts = Vec::with_capacity(raw.rollouts.len());
    for (i, r) in raw.rollouts.into_iter().enumerate() {
        let at = |e: crate::model::ModelError| format!("rollout {i}: {e}");
        let action = ActionLabel::new(r.action).map_err(at)?;
        let states = r
            .states
            .into_iter()
            .map(|s| {
                let (class, tag, copy) = match s {
                    RawState::Plain(c, t) => (c, t, 0),
                    RawState::Copy(c, t, k) => (c, t, k),
                };
                Ok(TaggedState::new(
                    ClassId::new(class).map_err(at)?,
                    StateTag::with_copy(tag, copy).map_err(at)?,
                ))
            })
            .collect::<Result<Vec<_>, String>>()?;
        let terminal = TerminalLabel::parse(&r.terminal).map_err(at)?;
        rollouts.push(Rollout::new(action, states, terminal));
    }
    let population = Population::new(rollouts).map_err(Bad::Invalid)?;
    Ok(PopulationFile {
        population,
        payoffs,
    })
}

pub fn population_to_json(file: &PopulationFile) -> Value {
    serde_json::to_value(raw_from(file)).expect("plain data serializes")
}

/// Parses a population document. Distinctness violations come back as
/// [`IoError::Invalid`] with the full violation list.
pub fn population_from_str(text: &str, path: &str) -> Result<PopulationFile, IoError> {
    let parse = |message: String| IoError::Parse {
        path: path.to_string(),
        message,
    };
    let raw: RawPopulation = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
    file_from(raw).map_err(|e| match e {
        Bad::Label(m) => parse(m),
        Bad::Invalid(v) => IoError::Invalid(v),
    })
}

/// Pretty-printed JSON with sorted object keys and a trailing newline.
pub fn canonical_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_population(path: &Path) -> Result<PopulationFile, IoError> {
    population_from_str(&read_text(path)?, &path.display().to_string())
}

pub fn write_population(path: &Path, file: &PopulationFile) -> Result<(), IoError> {
    write_text(path, &canonical_string(&population_to_json(file)))
}

/// Reads a population file and returns the population after checking that
/// its canonical form parses back to the same value.
pub fn roundtrip_population(path: &Path) -> Result<Population, IoError> {
    let file = read_population(path)?;
    let text = canonical_string(&population_to_json(&file));
    let again = population_from_str(&text, &path.display().to_string())?;
    debug_assert_eq!(again, file);
    Ok(again.population)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_sim_config(path: &Path) -> Result<SimConfig, IoError> {
    read_json(path)
}

/// One schema per non-blank line.
pub fn read_schemata(path: &Path) -> Result<Vec<Schema>, IoError> {
    parse_schema_list(&read_text(path)?).map_err(|(line, e)| IoError::Parse {
        path: path.display().to_string(),
        message: format!("line {line}: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{p_a, p_b};
    use crate::model::{inflate, Violation};

    fn file(p: Population) -> PopulationFile {
        PopulationFile {
            population: p,
            payoffs: [("f1", 1), ("f2", 0)]
                .iter()
                .map(|(k, v)| (k.to_string(), from_int(*v)))
                .collect(),
        }
    }

    #[test]
    fn canonical_round_trip() {
        for p in [p_a(), p_b(), inflate(&p_b(), 3)] {
            let f = file(p);
            let text = canonical_string(&population_to_json(&f));
            let back = population_from_str(&text, "mem").unwrap();
            assert_eq!(back, f);
            assert_eq!(canonical_string(&population_to_json(&back)), text);
        }
    }

    #[test]
    fn accepts_integer_payoffs_and_missing_payoff_block() {
        let text = r#"{"rollouts":[{"action":"a","states":[[3,"x"]],"terminal":"t"}],
                       "payoffs":{"t":-2}}"#;
        let f = population_from_str(text, "mem").unwrap();
        assert_eq!(
            f.payoffs.get(&TerminalLabel::new("t").unwrap()),
            Some(&from_int(-2))
        );
        let bare = r#"{"rollouts":[{"action":"a","states":[],"terminal":"t"}]}"#;
        assert!(population_from_str(bare, "mem").unwrap().payoffs.is_empty());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            population_from_str(r#"{"rollouts":[{"action":"a""#, "mem"),
            Err(IoError::Parse { .. })
        ));
        let dup_term = r#"{"rollouts":[
            {"action":"a","states":[[1,"x"]],"terminal":"t"},
            {"action":"b","states":[[1,"y"]],"terminal":"t"}]}"#;
        match population_from_str(dup_term, "mem") {
            Err(IoError::Invalid(e)) => {
                assert!(matches!(e.violations[0], Violation::DuplicateTerminal { .. }))
            }
            other => panic!("{other:?}"),
        }
        let bad_class = r#"{"rollouts":[{"action":"a","states":[[0,"x"]],"terminal":"t"}]}"#;
        assert!(matches!(
            population_from_str(bad_class, "mem"),
            Err(IoError::Parse { .. })
        ));
        let extra = r#"{"rollouts":[],"bogus":1}"#;
        assert!(matches!(
            population_from_str(extra, "mem"),
            Err(IoError::Parse { .. })
        ));
    }
}
