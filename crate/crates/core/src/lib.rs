//! Simulation workbench for goal-directed city navigation guided by landmarks.

pub mod agents;
pub mod env;
pub mod eval;
pub mod geom;
pub mod http;
pub mod lm;
pub mod memory;
pub mod perception;
pub mod planner;
pub mod spatial;
pub mod taskgen;
