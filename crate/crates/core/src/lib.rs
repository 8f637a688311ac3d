//! Finite-population Geiringer workbench.
//!
//! Populations of rollouts are recombined by one-point and single-swap
//! crossover; [`stats`] predicts the limiting schema frequencies in closed
//! form, [`recomb`] runs the chain and enumerates orbits exactly, and
//! [`digraph`] evaluates actions with weighted random walks over the
//! similarity-class graph.

pub mod cli;
pub mod digraph;
pub mod envsim;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod random;
pub mod rational;
pub mod recomb;
pub mod stats;
pub mod syntax;
pub mod verify;

pub use model::{
    inflate, is_homologous, schema_count, schema_match, validate_population, ActionLabel, ClassId,
    PayoffMap, Population, Rollout, Schema, StateTag, Tail, TaggedState, TerminalLabel,
};
pub use rational::Rational;
pub use syntax::parse_schema;
