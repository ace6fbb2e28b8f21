//! Active-inference topological navigation in a simulated grid world.

pub mod agent;
pub mod coverage;
pub mod error;
pub mod experiment;
pub mod frontier;
pub mod map;
pub mod model;
pub mod planner;
pub mod world;

pub use error::{NavError, Result};
