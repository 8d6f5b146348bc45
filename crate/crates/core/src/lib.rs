//! Calibrating expert/fast model routers with PAC-style risk guarantees.
//!
//! A router sends each input either to an expensive expert model or to a
//! cheap fast model, based on a score and a threshold. This crate
//!
//! * models synthetic input distributions with piecewise-constant densities
//!   on `[0, 1]` ([`world`]),
//! * evaluates routing risk exactly ([`risk`]),
//! * calibrates the threshold so that the joint probability over calibration
//!   data and a fresh input of exceeding the loss tolerance is at most `alpha`
//!   ([`calibrate`]),
//! * builds local relabelling attacks that no `n`-sample procedure can detect
//!   ([`adversary`]),
//! * estimates pointwise and joint guarantees by Monte-Carlo and by exact
//!   enumeration, and runs the end-to-end demonstration that a pointwise
//!   (per-input) guarantee forces an algorithm to almost always defer
//!   ([`simulate`]).
//!
//! The runnable programs under `examples/` walk through each capability; the
//! `pacroute` binary drives the same machinery from JSON config files
//! ([`cli`]).

pub mod adversary;
pub mod calibrate;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod report;
pub mod risk;
pub mod simulate;
pub mod world;

pub use error::{Error, Result};
