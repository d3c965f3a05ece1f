//! `hubsim`: a deterministic discrete-event simulator of a server built
//! around an FPGA SmartNIC, with a GPU, NVMe SSDs, a CPU and a P4 switch.
//!
//! Each subsystem is a protocol state machine driven by [`sim::Engine`].
//! Scenarios in [`scenarios`] wire them together into end-to-end
//! experiments whose results are written as CSV by [`report`].

pub mod config;
pub mod devices;
pub mod error;
pub mod fabric;
pub mod nvme;
pub mod report;
pub mod scenarios;
pub mod sim;
pub mod switch;
pub mod transport;

pub use error::{Result, SimError};
