use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::command::{Completion, NvmeCommand};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueLocation {
    CpuMemory,
    FpgaOnChip,
}

impl fmt::Display for QueueLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueueLocation::CpuMemory => "cpu-memory",
            QueueLocation::FpgaOnChip => "fpga-on-chip",
        })
    }
}

impl FromStr for QueueLocation {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu-memory" => Ok(QueueLocation::CpuMemory),
            "fpga-on-chip" => Ok(QueueLocation::FpgaOnChip),
            _ => Err(SimError::Config(format!("unknown queue location `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueFull;

/// Fixed-depth ring using the one-slot-open convention: it holds at most
/// `depth - 1` entries so that `head == tail` always means empty.
#[derive(Debug, Clone)]
pub struct Ring<T> {
    depth: u32,
    head: u32,
    tail: u32,
    entries: Vec<Option<T>>,
}

impl<T: Copy> Ring<T> {
    pub fn new(depth: u32) -> Result<Self> {
        if depth < 2 {
            return Err(SimError::Config(format!(
                "queue depth {depth} must be >= 2"
            )));
        }
        Ok(Ring {
            depth,
            head: 0,
            tail: 0,
            entries: vec![None; depth as usize],
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn head(&self) -> u32 {
        self.head
    }

    pub fn tail(&self) -> u32 {
        self.tail
    }

    pub fn occupancy(&self) -> u32 {
        (self.tail + self.depth - self.head) % self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.head == self.tail
    }

    pub fn is_full(&self) -> bool {
        self.occupancy() == self.depth - 1
    }

    pub fn push(&mut self, v: T) -> Result<(), QueueFull> {
        if self.is_full() {
            return Err(QueueFull);
        }
        self.entries[self.tail as usize] = Some(v);
        self.tail = (self.tail + 1) % self.depth;
        Ok(())
    }

    pub fn pop(&mut self) -> Option<T> {
        if self.is_empty() {
            return None;
        }
        let v = self.entries[self.head as usize].take();
        self.head = (self.head + 1) % self.depth;
        v
    }
}

#[derive(Debug, Clone)]
pub struct SubmissionQueue {
    pub ring: Ring<NvmeCommand>,
    pub location: QueueLocation,
}

impl SubmissionQueue {
    pub fn new(depth: u32, location: QueueLocation) -> Result<Self> {
        Ok(SubmissionQueue {
            ring: Ring::new(depth)?,
            location,
        })
    }
}

/// Completion queue that also rejects a second completion for a cid that
/// is still unconsumed.
#[derive(Debug, Clone)]
pub struct CompletionQueue {
    pub ring: Ring<Completion>,
    pub location: QueueLocation,
    posted: BTreeMap<u16, u64>,
}

impl CompletionQueue {
    pub fn new(depth: u32, location: QueueLocation) -> Result<Self> {
        Ok(CompletionQueue {
            ring: Ring::new(depth)?,
            location,
            posted: BTreeMap::new(),
        })
    }

    pub fn post(&mut self, c: Completion) -> Result<()> {
        if self.posted.contains_key(&c.cid) {
            return Err(SimError::Protocol(format!(
                "second completion for in-flight cid {}",
                c.cid
            )));
        }
        self.ring.push(c).map_err(|_| {
            SimError::Protocol(format!("completion queue overflow (cid {})", c.cid))
        })?;
        self.posted.insert(c.cid, c.tag);
        Ok(())
    }

    pub fn consume(&mut self) -> Option<Completion> {
        let c = self.ring.pop()?;
        self.posted.remove(&c.cid);
        Some(c)
    }
}
