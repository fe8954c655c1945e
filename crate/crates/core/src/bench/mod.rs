//! Benchmark harness: instance generation, the mirror-prox baseline, sweeps,
//! dense audits and config parsing.

pub mod baseline;
pub mod config;
pub mod generate;
pub mod sweep;
pub mod verify;
