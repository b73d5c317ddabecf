//! Experiment runner behind the `npss` CLI.

pub mod commands;
pub mod complexity;
pub mod config;
pub mod energy;
pub mod latency;

pub use commands::{cmd_calibrate, cmd_complexity, cmd_detect, cmd_energy, cmd_gen, cmd_latency};
pub use complexity::{complexity, ComplexityReport};
pub use config::Config;
pub use energy::{energy_savings, EnergyParams};
pub use latency::{DetectorKind, LatencyRow, LatencySummary, TrialSpec};
