//! Benchmark suites with JSON reports, plus the headless acceptance checks.

pub mod acceptance;
pub mod graphs;
pub mod report;
pub mod suites;

pub use report::Report;
