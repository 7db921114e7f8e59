//! Partially observable Markov decision processes with a stage duration `h`:
//! the transformed model `G_h`, the strategy that mimics a `G_h` strategy in
//! the base model, payoff evaluators, a verification harness, and text I/O.

pub mod epoch;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod linalg;
pub mod mimic;
pub mod model;
pub mod strategy;
pub mod verify;

pub use error::{Error, Result};
pub use model::{MixedAction, PomdpModel, RawModel, StageDuration, StagedModel};
pub use strategy::{FiniteStateController, History, SequenceStrategy, Strategy, TableStrategy};
