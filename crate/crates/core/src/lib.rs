//! Partisan-bias audit for text valence models.
//!
//! Probes a valence scorer with politician-name stimuli and fits weighted
//! regressions of the resulting scores on party affiliation and confounders.

pub mod audit;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod lexicon;
pub mod pruning;
pub mod scorer;
pub mod stats;
pub mod stimuli;
pub mod util;

pub use error::{Error, Result};
