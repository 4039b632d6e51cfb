//! Robust distributed extra-gradient (RDEG) for Byzantine-resilient min-max
//! optimization.

pub mod aggregation;
pub mod geometry;
pub mod problems;
pub mod protocol;
pub mod rng;
pub mod harness;
pub mod selftest;
