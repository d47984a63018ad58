//! Federated game simulator.
//!
//! A small laboratory for studying how federated training behaves when every
//! client's data carries an easy-to-learn spurious feature whose correlation
//! with the label differs per client (and reverses at test time). It provides:
//!
//! - decorated dataset synthesis (color channels / corner patches over
//!   IDX- and CIFAR-format corpora) with per-client noise levels,
//! - weight-averaging baselines (FedSGD, FedAVG),
//! - best-response game training where clients hold individual predictors and
//!   optimize against the frozen ensemble of everyone else, sequentially or in
//!   parallel, optionally with historical-predictor memory buffers and a
//!   shared trainable representation,
//! - per-round metrics, oscillation statistics, termination rules, and a CLI
//!   that runs named presets into deterministic CSV traces.
//!
//! Everything is f64 and deterministic: one master seed derives independent
//! ChaCha streams per client and stage, so re-runs are byte-identical and
//! parallel-round updates commute.

pub mod config;
pub mod data;
pub mod error;
pub mod game;
pub mod metrics;
pub mod nn;
pub mod presets;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
