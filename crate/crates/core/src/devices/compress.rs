use std::fmt;
use std::str::FromStr;

use super::CpuModel;
use crate::error::{Result, SimError};
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Cpu,
    Fpga,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Cpu => "cpu",
            Placement::Fpga => "fpga",
        })
    }
}

impl FromStr for Placement {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu" => Ok(Placement::Cpu),
            "fpga" => Ok(Placement::Fpga),
            _ => Err(SimError::Config(format!("unknown placement `{s}`"))),
        }
    }
}

/// Time to push `bytes` through a `gbps` stream, rounded up.
pub fn stream_time(bytes: u64, gbps: f64) -> SimTime {
    SimTime::from_ns_f64_ceil(bytes as f64 * 8.0 / gbps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compressed {
    pub out_bytes: u64,
    pub done: SimTime,
}

/// Compression as a cost, not a codec: output size is `input * ratio`.
#[derive(Debug, Clone)]
pub struct CompressionEngine {
    pub placement: Placement,
    pub ratio: f64,
    pub fpga_gbps: f64,
    pub fpga_pipeline: SimTime,
    /// The FPGA engine is pipelined: inputs serialise at line rate but
    /// overlap in the fixed-latency stages.
    fpga_free_at: SimTime,
    bytes_in: u64,
    bytes_out: u64,
}

impl CompressionEngine {
    pub fn new(
        placement: Placement,
        ratio: f64,
        fpga_gbps: f64,
        fpga_pipeline: SimTime,
    ) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(SimError::Config(format!(
                "compression ratio {ratio} not in (0, 1]"
            )));
        }
        if fpga_gbps.is_nan() || fpga_gbps <= 0.0 {
            return Err(SimError::Config("compression line rate must be > 0".into()));
        }
        Ok(CompressionEngine {
            placement,
            ratio,
            fpga_gbps,
            fpga_pipeline,
            fpga_free_at: SimTime::ZERO,
            bytes_in: 0,
            bytes_out: 0,
        })
    }

    pub fn output_bytes(&self, bytes: u64) -> u64 {
        ((bytes as f64 * self.ratio).ceil() as u64).clamp(1, bytes)
    }

    /// Compresses `bytes` starting at `now`. CPU placement runs as one work
    /// item on `core`; FPGA placement uses no core.
    pub fn compress(
        &mut self,
        now: SimTime,
        bytes: u64,
        cpu: &mut CpuModel,
        core: Option<usize>,
    ) -> Result<Compressed> {
        if bytes == 0 {
            return Err(SimError::Precondition("compress of zero bytes".into()));
        }
        let done = match self.placement {
            Placement::Cpu => {
                let core = core.ok_or_else(|| {
                    SimError::Config("CPU compression needs an assigned core".into())
                })?;
                let rate = cpu.costs.compression_gbps_per_core;
                cpu.core_execute(core, now, stream_time(bytes, rate))?
            }
            Placement::Fpga => {
                let start = now.max(self.fpga_free_at);
                self.fpga_free_at = start + stream_time(bytes, self.fpga_gbps);
                self.fpga_free_at + self.fpga_pipeline
            }
        };
        let out_bytes = self.output_bytes(bytes);
        self.bytes_in += bytes;
        self.bytes_out += out_bytes;
        Ok(Compressed { out_bytes, done })
    }

    pub fn bytes(&self) -> (u64, u64) {
        (self.bytes_in, self.bytes_out)
    }
}
