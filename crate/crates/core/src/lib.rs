//! Deterministic discrete-event model of a connection-pool server under a
//! slow-read attack, with a pool-zone defense and run scoring.

pub mod defense;
pub mod metrics;
pub mod netmodel;
pub mod server;
pub mod sim;
pub mod simkernel;
pub mod workload;
