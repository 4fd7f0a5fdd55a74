//! Scenario configuration, Monte Carlo orchestration, metrics and sweeps.

pub mod metrics;
pub mod montecarlo;
pub mod scenario;
pub mod selftest;
pub mod sweep;
