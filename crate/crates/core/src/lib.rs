//! Packet-level simulator for iSCSI over multiple TCP connections, with an
//! optional shared congestion state ("ensemble") across connections that
//! run between the same pair of hosts.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod iscsi;
pub mod metrics;
pub mod netem;
pub mod runner;
pub mod sim;
pub mod tcp;
pub mod testbed;
pub mod workload;

pub use error::{EnsembleError, RunError, SimError};
pub use sim::SimTime;
