//! Experiment harness: named ablation suites, a seed-sweep runner that
//! persists per-run metrics and cross-seed summaries, and SVG plotting.

pub mod plot;
pub mod runner;
pub mod stats;
pub mod suite;

pub use runner::{run_suite, SuiteReport};
pub use suite::{canonical_suite, suite_names, ExperimentSuite, Variant};
