use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SimError};
use crate::fabric::{BusAddr, Device, DmaTicket, Fabric};

/// Where a part of an incoming message lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemLoc {
    Cpu,
    Fpga,
    Gpu,
}

impl MemLoc {
    pub fn device(self) -> Device {
        match self {
            MemLoc::Cpu => Device::Cpu,
            MemLoc::Fpga => Device::Fpga,
            MemLoc::Gpu => Device::Gpu,
        }
    }
}

impl fmt::Display for MemLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemLoc::Cpu => "cpu-memory",
            MemLoc::Fpga => "fpga-memory",
            MemLoc::Gpu => "gpu-memory",
        })
    }
}

impl FromStr for MemLoc {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu" | "cpu-memory" => Ok(MemLoc::Cpu),
            "fpga" | "fpga-memory" => Ok(MemLoc::Fpga),
            "gpu" | "gpu-memory" => Ok(MemLoc::Gpu),
            _ => Err(SimError::Config(format!("unknown memory location `{s}`"))),
        }
    }
}

/// Per-flow rule for splitting a received message between memories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageDescriptor {
    pub flow_id: u32,
    pub header_len_bytes: u64,
    pub header_dest: MemLoc,
    pub payload_dest: MemLoc,
}

/// Result of landing a message on the FPGA according to its descriptor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Landing {
    pub dmas: Vec<DmaTicket>,
    /// Bytes kept in FPGA memory.
    pub local_bytes: u64,
}

impl Landing {
    pub fn dma_bytes(&self) -> u64 {
        self.dmas.iter().map(|t| t.bytes).sum()
    }
}

impl MessageDescriptor {
    pub fn validate(&self, msg_len: u64) -> Result<()> {
        if self.header_len_bytes > msg_len {
            return Err(SimError::Config(format!(
                "flow {}: header {} bytes exceeds message length {msg_len}",
                self.flow_id, self.header_len_bytes
            )));
        }
        Ok(())
    }

    /// Moves a message received into FPGA memory to its destinations: parts
    /// bound for CPU or GPU memory are DMA'd, FPGA-bound parts stay put.
    pub fn land(&self, fabric: &mut Fabric, msg_len: u64, dst_addr: u64) -> Result<Landing> {
        self.validate(msg_len)?;
        let mut out = Landing::default();
        let parts = [
            (self.header_dest, self.header_len_bytes, 0),
            (
                self.payload_dest,
                msg_len - self.header_len_bytes,
                self.header_len_bytes,
            ),
        ];
        for (dest, bytes, offset) in parts {
            if bytes == 0 {
                continue;
            }
            if dest == MemLoc::Fpga {
                out.local_bytes += bytes;
            } else {
                out.dmas.push(fabric.dma(
                    BusAddr::new(Device::Fpga, offset),
                    BusAddr::new(dest.device(), dst_addr + offset),
                    bytes,
                )?);
            }
        }
        Ok(out)
    }
}
