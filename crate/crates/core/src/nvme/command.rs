use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SimError};
use crate::fabric::BusAddr;

pub const BLOCK_BYTES: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Read,
    Write,
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Opcode::Read => "read",
            Opcode::Write => "write",
        })
    }
}

impl FromStr for Opcode {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "read" => Ok(Opcode::Read),
            "write" => Ok(Opcode::Write),
            _ => Err(SimError::Config(format!("unknown NVMe opcode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NvmeCommand {
    pub cid: u16,
    pub opcode: Opcode,
    pub slba: u64,
    pub nblocks: u32,
    /// Host-side data buffer: DMA destination for reads, source for writes.
    pub buffer: BusAddr,
    /// Run-wide submission serial, used only for auditing.
    pub tag: u64,
}

impl NvmeCommand {
    pub fn bytes(&self) -> u64 {
        self.nblocks as u64 * BLOCK_BYTES
    }

    pub fn validate(&self, capacity_blocks: u64) -> Result<()> {
        if self.nblocks == 0 {
            return Err(SimError::Precondition(format!(
                "cid {}: nblocks must be >= 1",
                self.cid
            )));
        }
        let end = self.slba.checked_add(self.nblocks as u64);
        if end.is_none_or(|e| e > capacity_blocks) {
            return Err(SimError::Precondition(format!(
                "cid {}: LBA range {}+{} beyond capacity {capacity_blocks}",
                self.cid, self.slba, self.nblocks
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub cid: u16,
    pub status: u16,
    pub tag: u64,
}
