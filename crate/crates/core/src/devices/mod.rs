//! Behavioural models of the CPU, GPU and compression engine.

mod compress;
mod cpu;
mod gpu;

pub use compress::{stream_time, Compressed, CompressionEngine, Placement};
pub use cpu::{Core, CpuCosts, CpuModel};
pub use gpu::GpuModel;
