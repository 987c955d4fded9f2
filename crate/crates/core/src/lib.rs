//! MaxRM random forests: regression forests whose leaf values, splits and
//! tree weights minimize the maximum risk across training environments.

pub mod baselines;
pub mod cart;
pub mod data;
pub mod error;
pub mod harness;
pub mod minimax;
pub mod risk;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
