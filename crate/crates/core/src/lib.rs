//! Microscopic freeway work-zone simulation with mixed human and
//! automated traffic, conflict-based safety indicators, and an
//! orthogonal-experiment harness.

pub mod domain;
pub mod driving;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod safety;
pub mod toc;
pub mod trajectory;

pub use error::{Error, Result};
