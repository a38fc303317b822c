//! Safe and time-efficient routing of electric air taxis over a network of
//! vertistops, formulated as a Markov decision process.

pub mod error;
pub mod experiments;
pub mod mdp;
pub mod model;
pub mod rollout;
pub mod safety;
pub mod solver;
pub mod stochastics;

pub use error::{Error, Result};
