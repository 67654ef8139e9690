//! Calibration audits for trajectory-uncertainty models at extreme safety
//! thresholds.
//!
//! The crate fits Gaussian, noisy-rational, mixture, quantile-tube,
//! scenario-hull and two-mode models to trajectory actions, counts how often
//! held-out actions leave each model's 1-δ region, and summarizes the
//! observed/expected violation ratio across a δ grid.

pub mod actions;
pub mod calibration;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod ingest;
pub mod models;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod trajectory;

pub use error::{Error, ErrorClass, Result};
