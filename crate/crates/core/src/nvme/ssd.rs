use std::collections::VecDeque;

use super::command::{NvmeCommand, Opcode};
use crate::error::{Result, SimError};
use crate::sim::{Dist, RngStream, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct SsdModel {
    pub capacity_blocks: u64,
    pub max_inflight: usize,
    pub read_latency: Dist,
    pub write_latency: Dist,
    /// Sustained 4 KiB operations per second.
    pub read_iops: u64,
    pub write_iops: u64,
    /// Doorbell to command-in-controller, including the SQ entry read.
    pub fetch_latency: SimTime,
}

impl Default for SsdModel {
    fn default() -> Self {
        SsdModel {
            // 7.68 TB of 4 KiB blocks
            capacity_blocks: 1_875_000_000,
            max_inflight: 128,
            read_latency: Dist::lognormal_with_mean(80_000.0, 0.2, 400_000).unwrap(),
            write_latency: Dist::lognormal_with_mean(80_000.0, 0.2, 400_000).unwrap(),
            read_iops: 700_000,
            write_iops: 170_000,
            fetch_latency: SimTime::ns(1_000),
        }
    }
}

impl SsdModel {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_blocks == 0 || self.max_inflight == 0 {
            return Err(SimError::Config(
                "ssd capacity and max_inflight must be > 0".into(),
            ));
        }
        if self.read_iops == 0 || self.write_iops == 0 {
            return Err(SimError::Config("ssd iops must be > 0".into()));
        }
        Ok(())
    }

    pub fn iops(&self, op: Opcode) -> u64 {
        match op {
            Opcode::Read => self.read_iops,
            Opcode::Write => self.write_iops,
        }
    }

    pub fn latency(&self, op: Opcode) -> &Dist {
        match op {
            Opcode::Read => &self.read_latency,
            Opcode::Write => &self.write_latency,
        }
    }
}

/// Admits at most `iops` operation starts per second, with exact rational
/// spacing and no burst credit after idle periods.
#[derive(Debug, Clone)]
pub struct Pacer {
    iops: u64,
    /// Earliest next start, in units of `1 / iops` ns.
    next_scaled: u128,
}

impl Pacer {
    pub fn new(iops: u64) -> Self {
        Pacer {
            iops,
            next_scaled: 0,
        }
    }

    /// Start time for an operation that is ready at `now`.
    pub fn admit(&mut self, now: SimTime) -> SimTime {
        let iops = self.iops as u128;
        let base = self.next_scaled.max(now.as_ns() as u128 * iops);
        let start = base.div_ceil(iops);
        self.next_scaled = base + 1_000_000_000;
        SimTime::ns(start as u64)
    }
}

/// A command occupying an internal slot, and when its media/DMA work ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Started {
    pub qp: usize,
    pub cmd: NvmeCommand,
    pub start: SimTime,
    pub media: SimTime,
}

/// Controller-side state of one SSD.
#[derive(Debug, Clone)]
pub struct SsdController {
    pub model: SsdModel,
    read_pacer: Pacer,
    write_pacer: Pacer,
    inflight: usize,
    waiting: VecDeque<(usize, NvmeCommand)>,
    rng: RngStream,
    started: u64,
}

impl SsdController {
    pub fn new(model: SsdModel, seed: u64, stream: &str) -> Result<Self> {
        model.validate()?;
        Ok(SsdController {
            read_pacer: Pacer::new(model.read_iops),
            write_pacer: Pacer::new(model.write_iops),
            model,
            inflight: 0,
            waiting: VecDeque::new(),
            rng: RngStream::new(seed, stream),
            started: 0,
        })
    }

    pub fn inflight(&self) -> usize {
        self.inflight
    }

    pub fn started(&self) -> u64 {
        self.started
    }

    /// A fetched command: starts if a slot is free, else waits FIFO.
    pub fn arrive(&mut self, now: SimTime, qp: usize, cmd: NvmeCommand) -> Option<Started> {
        self.waiting.push_back((qp, cmd));
        self.try_start(now)
    }

    /// Frees a slot and starts the next waiting command, if any.
    pub fn release(&mut self, now: SimTime) -> Result<Option<Started>> {
        if self.inflight == 0 {
            return Err(SimError::Protocol(
                "ssd slot released while none in flight".into(),
            ));
        }
        self.inflight -= 1;
        Ok(self.try_start(now))
    }

    fn try_start(&mut self, now: SimTime) -> Option<Started> {
        if self.inflight >= self.model.max_inflight {
            return None;
        }
        let (qp, cmd) = self.waiting.pop_front()?;
        self.inflight += 1;
        self.started += 1;
        let pacer = match cmd.opcode {
            Opcode::Read => &mut self.read_pacer,
            Opcode::Write => &mut self.write_pacer,
        };
        let start = pacer.admit(now);
        let media = self.model.latency(cmd.opcode).sample(&mut self.rng);
        Some(Started {
            qp,
            cmd,
            start,
            media,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pacer_exact_rate() {
        let mut p = Pacer::new(700_000);
        let mut last = SimTime::ZERO;
        for _ in 0..700_000 {
            last = p.admit(SimTime::ZERO);
        }
        // the 700000th start is at ceil(699999 * 1e9 / 7e5) ns
        assert_eq!(
            last.as_ns(),
            (699_999u128 * 1_000_000_000).div_ceil(700_000) as u64
        );
    }

    #[test]
    fn pacer_no_burst_after_idle() {
        let mut p = Pacer::new(1_000_000);
        assert_eq!(p.admit(SimTime::ZERO), SimTime::ZERO);
        assert_eq!(p.admit(SimTime::ns(10_000)), SimTime::ns(10_000));
        assert_eq!(p.admit(SimTime::ns(10_000)), SimTime::ns(11_000));
    }

    #[test]
    fn slots_bound_inflight() {
        let model = SsdModel {
            max_inflight: 2,
            read_iops: u64::MAX / 2_000_000_000,
            ..SsdModel::default()
        };
        let mut c = SsdController::new(model, 0, "ssd").unwrap();
        let cmd = NvmeCommand {
            cid: 0,
            opcode: Opcode::Read,
            slba: 0,
            nblocks: 1,
            buffer: crate::fabric::BusAddr::new(crate::fabric::Device::Cpu, 0),
            tag: 0,
        };
        assert!(c.arrive(SimTime::ZERO, 0, cmd).is_some());
        assert!(c.arrive(SimTime::ZERO, 0, cmd).is_some());
        assert!(c.arrive(SimTime::ZERO, 0, cmd).is_none());
        assert_eq!(c.inflight(), 2);
        assert!(c.release(SimTime::ns(5)).unwrap().is_some());
        assert_eq!(c.inflight(), 2);
        c.release(SimTime::ns(6)).unwrap();
        c.release(SimTime::ns(6)).unwrap();
        assert!(c.release(SimTime::ns(6)).is_err());
    }
}
