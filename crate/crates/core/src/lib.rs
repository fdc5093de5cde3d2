//! Exact tabular joint-KL toolkit: build an actual distribution and a target over
//! finite variables, decompose the KL between them into named terms, and optimize it.

pub mod decomp;
pub mod error;
mod forms;
pub mod objectives;
pub mod optim;
pub mod prob;
pub mod random;
pub mod systems;

pub use error::{Error, Result};
