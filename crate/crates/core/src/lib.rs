//! Damped proximal Finito/MISO under cyclic and shuffled sampling.

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod finito;
pub mod model;
pub mod problems;
pub mod prox;
pub mod reference;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Components, MemoryState, ProblemInstance, Regularizer, Vector, ZTable};
pub use sampling::{Permutation, Regime, SamplingPlan};
