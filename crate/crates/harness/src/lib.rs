//! Experiment harness: JSON-configured seeded sweeps over
//! (dataset x method x noise level x seed), theory verification suites, and
//! static SVG trade-off plots.

#![forbid(unsafe_code)]

pub mod config;
pub mod plot;
pub mod runner;
pub mod verify;
