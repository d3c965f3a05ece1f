use std::fmt;
use std::str::FromStr;

use super::command::{Completion, NvmeCommand, Opcode, BLOCK_BYTES};
use super::queue::{CompletionQueue, QueueLocation, SubmissionQueue};
use super::ssd::{SsdController, SsdModel, Started};
use crate::devices::{CpuCosts, CpuModel};
use crate::error::{Result, SimError};
use crate::fabric::{BusAddr, Device, Fabric, FabricConfig, TransferId};
use crate::sim::{ComponentId, Engine, Event, EventKind, Handler, RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverKind {
    /// Host cores write SQ entries, ring doorbells and poll CQs.
    Cpu,
    /// FPGA logic owns on-chip queues and captures completions directly.
    Fpga,
}

impl fmt::Display for DriverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriverKind::Cpu => "cpu",
            DriverKind::Fpga => "fpga",
        })
    }
}

impl FromStr for DriverKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu" => Ok(DriverKind::Cpu),
            "fpga" => Ok(DriverKind::Fpga),
            _ => Err(SimError::Config(format!("unknown NVMe driver `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NvmeConfig {
    pub num_ssds: usize,
    pub queue_depth: u32,
    pub qpairs_per_core: usize,
    pub ssd: SsdModel,
    /// Core time per read command (submit + completion handling).
    pub read_cmd_cpu: SimTime,
    pub write_cmd_cpu: SimTime,
    /// Cost of a poll pass that finds nothing.
    pub empty_poll: SimTime,
    /// Delay before the next poll after an empty one.
    pub poll_interval: SimTime,
    /// Most completions plus submissions handled in one poll pass.
    pub poll_batch: usize,
    /// FPGA command issue spacing.
    pub fpga_issue: SimTime,
    /// CQ write arrival to retirement on the FPGA.
    pub fpga_capture: SimTime,
}

impl Default for NvmeConfig {
    fn default() -> Self {
        NvmeConfig {
            num_ssds: 10,
            queue_depth: 1024,
            qpairs_per_core: 1,
            ssd: SsdModel::default(),
            read_cmd_cpu: SimTime::ns(700),
            write_cmd_cpu: SimTime::ns(2_900),
            empty_poll: SimTime::ns(50),
            poll_interval: SimTime::ns(2_000),
            poll_batch: 32,
            fpga_issue: SimTime::ns(5),
            fpga_capture: SimTime::ns(100),
        }
    }
}

impl NvmeConfig {
    pub fn validate(&self) -> Result<()> {
        self.ssd.validate()?;
        if self.num_ssds == 0 {
            return Err(SimError::Config("nvme.num_ssds must be >= 1".into()));
        }
        if self.num_ssds > u16::MAX as usize {
            return Err(SimError::Config("nvme.num_ssds too large".into()));
        }
        if self.queue_depth < 2 || self.queue_depth > 65_536 {
            return Err(SimError::ConfigKey {
                key: "nvme.queue_depth".into(),
                msg: format!("{} not in [2, 65536]", self.queue_depth),
            });
        }
        if self.qpairs_per_core == 0 {
            return Err(SimError::Config("nvme.qpairs_per_core must be >= 1".into()));
        }
        if self.read_cmd_cpu == SimTime::ZERO || self.write_cmd_cpu == SimTime::ZERO {
            return Err(SimError::Config(
                "nvme per-command CPU cost must be > 0".into(),
            ));
        }
        if self.poll_batch == 0 {
            return Err(SimError::Config("nvme.poll_batch must be >= 1".into()));
        }
        if self.poll_interval == SimTime::ZERO {
            return Err(SimError::Config("nvme.poll_interval_ns must be > 0".into()));
        }
        Ok(())
    }

    fn cmd_cpu(&self, op: Opcode) -> SimTime {
        match op {
            Opcode::Read => self.read_cmd_cpu,
            Opcode::Write => self.write_cmd_cpu,
        }
    }

    /// Submit-side share of the per-command cost.
    pub fn submit_cpu(&self, op: Opcode) -> SimTime {
        SimTime::ns(self.cmd_cpu(op).as_ns() / 2)
    }

    /// Completion-side share (poll hit, CQ doorbell, retire).
    pub fn complete_cpu(&self, op: Opcode) -> SimTime {
        self.cmd_cpu(op) - self.submit_cpu(op)
    }

    /// Aggregate SSD capacity for one direction, in ops/s.
    pub fn aggregate_iops(&self, op: Opcode) -> u64 {
        self.ssd.iops(op) * self.num_ssds as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub read_fraction: f64,
    pub nblocks: (u32, u32),
    /// Closed-loop commands kept in flight per SSD.
    pub outstanding_per_ssd: usize,
    /// Stop issuing after this many commands; `None` runs until the limit.
    pub total_commands: Option<u64>,
    /// Data buffer location for the FPGA driver (the CPU driver always
    /// uses host memory).
    pub fpga_buffer: Device,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            read_fraction: 1.0,
            nblocks: (1, 1),
            outstanding_per_ssd: 256,
            total_commands: None,
            fpga_buffer: Device::Fpga,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvmeEvent {
    SqDoorbell {
        qp: usize,
        tail: u64,
    },
    Fetched {
        qp: usize,
        cmd: NvmeCommand,
    },
    IoDone {
        qp: usize,
        cmd: NvmeCommand,
        dma: TransferId,
    },
    CqArrive {
        qp: usize,
        c: Completion,
    },
    Poll {
        core: usize,
    },
    CoreDone {
        core: usize,
    },
    Capture {
        qp: usize,
    },
    WindowStart,
}

impl EventKind for NvmeEvent {
    fn kind(&self) -> &'static str {
        match self {
            NvmeEvent::SqDoorbell { .. } => "sq-doorbell",
            NvmeEvent::Fetched { .. } => "fetch",
            NvmeEvent::IoDone { .. } => "io-done",
            NvmeEvent::CqArrive { .. } => "cq-write",
            NvmeEvent::Poll { .. } => "poll",
            NvmeEvent::CoreDone { .. } => "core-done",
            NvmeEvent::Capture { .. } => "capture",
            NvmeEvent::WindowStart => "window",
        }
    }
}

/// Lifecycle of one submitted command, for auditing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CmdRecord {
    pub bytes: u64,
    pub submitted: Option<SimTime>,
    pub doorbell: Option<SimTime>,
    pub completed: Option<SimTime>,
    pub retired: Option<SimTime>,
}

struct QueuePair {
    ssd: usize,
    core: Option<usize>,
    sq: SubmissionQueue,
    cq: CompletionQueue,
    free_cids: Vec<u16>,
    target: usize,
    outstanding: usize,
    /// Commands ever pushed to the SQ (doorbell value).
    submitted: u64,
    /// Commands the controller has fetched.
    fetched: u64,
    max_occupancy: u32,
}

#[derive(Default)]
struct CoreBatch {
    retire: Vec<(usize, Completion)>,
    submit: Vec<(usize, Opcode)>,
}

/// SSDs, queue pairs and one control-plane driver, wired to a fabric.
pub struct NvmeSystem {
    cfg: NvmeConfig,
    driver: DriverKind,
    workload: Workload,
    fabric: Fabric,
    ssds: Vec<SsdController>,
    ssd_ids: Vec<ComponentId>,
    qps: Vec<QueuePair>,
    cpu: CpuModel,
    core_ids: Vec<ComponentId>,
    core_qps: Vec<Vec<usize>>,
    batches: Vec<CoreBatch>,
    cursors: Vec<usize>,
    fpga_id: ComponentId,
    fpga_issue_free: SimTime,
    rng: RngStream,
    budget: Option<u64>,
    next_tag: u64,
    records: Vec<CmdRecord>,
    window_start: Option<SimTime>,
    busy_at_window: Vec<SimTime>,
    retired_in_window: [u64; 2],
    retired_total: u64,
    empty_polls: u64,
}

const SQ_DOORBELL_BASE: u64 = 0x1000;

fn sq_doorbell(local_qp: usize) -> u64 {
    SQ_DOORBELL_BASE + 16 * local_qp as u64
}

impl NvmeSystem {
    /// Builds the system and registers its components with `engine`.
    pub fn new(
        engine: &mut Engine<NvmeEvent>,
        cfg: NvmeConfig,
        fabric_cfg: FabricConfig,
        driver: DriverKind,
        cores: usize,
        workload: Workload,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(0.0..=1.0).contains(&workload.read_fraction) {
            return Err(SimError::Config("read_fraction must be in [0, 1]".into()));
        }
        let (lo, hi) = workload.nblocks;
        if lo == 0 || hi < lo {
            return Err(SimError::Config(format!(
                "nblocks range {lo}..={hi} invalid"
            )));
        }
        if driver == DriverKind::Cpu && cores == 0 {
            return Err(SimError::Config(
                "CPU control plane needs at least one core".into(),
            ));
        }
        let mut fabric = Fabric::new(fabric_cfg, seed, "fabric/nvme").with_devices([
            Device::Cpu,
            Device::Fpga,
            Device::Gpu,
        ]);
        let mut ssds = Vec::new();
        let mut ssd_ids = Vec::new();
        for s in 0..cfg.num_ssds {
            fabric.add_device(Device::Ssd(s as u16));
            ssd_ids.push(engine.register(format!("ssd{s}")));
            ssds.push(SsdController::new(
                cfg.ssd.clone(),
                seed,
                &format!("ssd/{s}"),
            )?);
        }
        let core_ids = (0..cores)
            .map(|c| engine.register(format!("core{c}")))
            .collect();
        let fpga_id = engine.register("fpga-nvme");

        let (location, owners): (QueueLocation, Vec<Option<usize>>) = match driver {
            DriverKind::Cpu => (
                QueueLocation::CpuMemory,
                (0..cores)
                    .flat_map(|c| std::iter::repeat_n(Some(c), cfg.qpairs_per_core))
                    .collect(),
            ),
            DriverKind::Fpga => (QueueLocation::FpgaOnChip, vec![None]),
        };
        let mut qps = Vec::new();
        let mut core_qps = vec![Vec::new(); cores];
        for (s, &ssd_id) in ssd_ids.iter().enumerate() {
            let per_ssd = owners.len();
            for (local, owner) in owners.iter().enumerate() {
                let target = workload.outstanding_per_ssd / per_ssd
                    + usize::from(local < workload.outstanding_per_ssd % per_ssd);
                let target = target.min(cfg.queue_depth as usize - 1);
                let id = qps.len();
                fabric
                    .registers_mut(Device::Ssd(s as u16))
                    .define_doorbell(sq_doorbell(local), ssd_id);
                if let Some(c) = owner {
                    core_qps[*c].push(id);
                }
                qps.push(QueuePair {
                    ssd: s,
                    core: *owner,
                    sq: SubmissionQueue::new(cfg.queue_depth, location)?,
                    cq: CompletionQueue::new(cfg.queue_depth, location)?,
                    free_cids: (0..cfg.queue_depth.min(65_536) as u16).rev().collect(),
                    target,
                    outstanding: 0,
                    submitted: 0,
                    fetched: 0,
                    max_occupancy: 0,
                });
            }
        }
        Ok(NvmeSystem {
            budget: workload.total_commands,
            rng: RngStream::new(seed, "nvme/workload"),
            cpu: CpuModel::new(cores, CpuCosts::default()),
            batches: (0..cores).map(|_| CoreBatch::default()).collect(),
            cursors: vec![0; cores],
            cfg,
            driver,
            workload,
            fabric,
            ssds,
            ssd_ids,
            qps,
            core_ids,
            core_qps,
            fpga_id,
            fpga_issue_free: SimTime::ZERO,
            next_tag: 0,
            records: Vec::new(),
            window_start: None,
            busy_at_window: Vec::new(),
            retired_in_window: [0; 2],
            retired_total: 0,
            empty_polls: 0,
        })
    }

    /// Schedules the initial submissions and, optionally, the start of the
    /// measurement window.
    pub fn start(
        &mut self,
        engine: &mut Engine<NvmeEvent>,
        window_start: Option<SimTime>,
    ) -> Result<()> {
        if let Some(t) = window_start {
            engine.schedule_at(t, self.fpga_id, NvmeEvent::WindowStart)?;
        }
        match self.driver {
            DriverKind::Cpu => {
                for c in 0..self.core_ids.len() {
                    engine.schedule(
                        SimTime::ZERO,
                        self.core_ids[c],
                        NvmeEvent::Poll { core: c },
                    )?;
                }
            }
            DriverKind::Fpga => {
                for qp in 0..self.qps.len() {
                    while self.wants_submit(qp) {
                        self.fpga_submit(engine, qp)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn wants_submit(&self, qp: usize) -> bool {
        let q = &self.qps[qp];
        q.outstanding < q.target && self.budget != Some(0)
    }

    fn new_command(&mut self, qp: usize, op: Opcode, now: SimTime) -> Result<NvmeCommand> {
        let (lo, hi) = self.workload.nblocks;
        let nblocks = self.rng.range_inclusive(lo as u64, hi as u64) as u32;
        let cap = self.cfg.ssd.capacity_blocks;
        let slba = self
            .rng
            .range_inclusive(0, cap.saturating_sub(nblocks as u64));
        let device = match self.driver {
            DriverKind::Cpu => Device::Cpu,
            DriverKind::Fpga => self.workload.fpga_buffer,
        };
        let q = &mut self.qps[qp];
        let cid = q
            .free_cids
            .pop()
            .ok_or_else(|| SimError::Protocol("no free command id".into()))?;
        let tag = self.next_tag;
        self.next_tag += 1;
        let cmd = NvmeCommand {
            cid,
            opcode: op,
            slba,
            nblocks,
            buffer: BusAddr::new(device, (tag % 4096) * BLOCK_BYTES * hi as u64),
            tag,
        };
        cmd.validate(cap)?;
        q.sq.ring
            .push(cmd)
            .map_err(|_| SimError::Protocol(format!("submission queue {qp} full")))?;
        q.max_occupancy = q.max_occupancy.max(q.sq.ring.occupancy());
        q.outstanding += 1;
        q.submitted += 1;
        if let Some(b) = self.budget.as_mut() {
            *b -= 1;
        }
        self.records.push(CmdRecord {
            bytes: cmd.bytes(),
            submitted: Some(now),
            ..CmdRecord::default()
        });
        Ok(cmd)
    }

    fn pick_op(&mut self) -> Opcode {
        if self.rng.unit() < self.workload.read_fraction {
            Opcode::Read
        } else {
            Opcode::Write
        }
    }

    fn ring_sq(
        &mut self,
        engine: &mut Engine<NvmeEvent>,
        qp: usize,
        from: Device,
        extra: SimTime,
    ) -> Result<()> {
        let q = &self.qps[qp];
        let local = qp - self.qps.iter().position(|x| x.ssd == q.ssd).unwrap_or(qp);
        let w = self.fabric.mmio_write(
            from,
            Device::Ssd(q.ssd as u16),
            sq_doorbell(local),
            q.submitted,
        )?;
        let target = w.handler.unwrap_or(self.ssd_ids[q.ssd]);
        self.fabric.deliver(&w)?;
        engine.schedule(
            extra + w.delay,
            target,
            NvmeEvent::SqDoorbell {
                qp,
                tail: q.submitted,
            },
        )?;
        Ok(())
    }

    fn fpga_submit(&mut self, engine: &mut Engine<NvmeEvent>, qp: usize) -> Result<()> {
        let now = engine.now();
        let issue = now.max(self.fpga_issue_free) + self.cfg.fpga_issue;
        self.fpga_issue_free = issue;
        let op = self.pick_op();
        self.new_command(qp, op, now)?;
        self.ring_sq(engine, qp, Device::Fpga, issue - now)
    }

    fn retire(&mut self, qp: usize, c: Completion, now: SimTime) -> Result<()> {
        let q = &mut self.qps[qp];
        q.outstanding -= 1;
        q.free_cids.push(c.cid);
        let r = &mut self.records[c.tag as usize];
        if r.retired.is_some() || r.completed.is_none() {
            return Err(SimError::Protocol(format!(
                "retire of tag {} out of protocol order",
                c.tag
            )));
        }
        r.retired = Some(now);
        self.retired_total += 1;
        if self.window_start.is_some_and(|w| now >= w) {
            self.retired_in_window[usize::from(c.status == 1)] += 1;
        }
        Ok(())
    }

    fn start_io(&mut self, engine: &mut Engine<NvmeEvent>, ssd: usize, s: Started) -> Result<()> {
        let now = engine.now();
        let ssd_dev = BusAddr::new(Device::Ssd(ssd as u16), s.cmd.slba * BLOCK_BYTES);
        let (src, dst) = match s.cmd.opcode {
            Opcode::Read => (ssd_dev, s.cmd.buffer),
            Opcode::Write => (s.cmd.buffer, ssd_dev),
        };
        let t = self.fabric.dma(src, dst, s.cmd.bytes())?;
        let done = s.start + s.media + t.duration;
        engine.schedule(
            done - now,
            self.ssd_ids[ssd],
            NvmeEvent::IoDone {
                qp: s.qp,
                cmd: s.cmd,
                dma: t.id,
            },
        )?;
        Ok(())
    }

    fn poll(&mut self, engine: &mut Engine<NvmeEvent>, core: usize) -> Result<()> {
        let now = engine.now();
        let mut work = SimTime::ZERO;
        let mut batch = CoreBatch::default();
        let limit = self.cfg.poll_batch;
        let n = self.core_qps[core].len();
        let first = self.cursors[core];
        self.cursors[core] = (first + 1) % n.max(1);
        for i in 0..n {
            let qp = self.core_qps[core][(first + i) % n];
            while batch.retire.len() < limit {
                let Some(c) = self.qps[qp].cq.consume() else {
                    break;
                };
                let op = if c.status == 1 {
                    Opcode::Write
                } else {
                    Opcode::Read
                };
                work += self.cfg.complete_cpu(op);
                batch.retire.push((qp, c));
            }
        }
        for i in 0..n {
            let qp = self.core_qps[core][(first + i) % n];
            let q = &self.qps[qp];
            let retiring = batch.retire.iter().filter(|r| r.0 == qp).count();
            let room = q.target - (q.outstanding - retiring);
            for _ in 0..room {
                let full = batch.retire.len() + batch.submit.len() >= limit;
                if full || self.budget.is_some_and(|b| b <= batch.submit.len() as u64) {
                    break;
                }
                let op = self.pick_op();
                work += self.cfg.submit_cpu(op);
                batch.submit.push((qp, op));
            }
        }
        if work == SimTime::ZERO {
            self.empty_polls += 1;
            self.cpu
                .core_execute(core, now, self.cfg.empty_poll.max(SimTime::ns(1)))?;
            engine.schedule(
                self.cfg.poll_interval,
                self.core_ids[core],
                NvmeEvent::Poll { core },
            )?;
            return Ok(());
        }
        let done = self.cpu.core_execute(core, now, work)?;
        self.batches[core] = batch;
        engine.schedule(
            done - now,
            self.core_ids[core],
            NvmeEvent::CoreDone { core },
        )?;
        Ok(())
    }

    fn core_done(&mut self, engine: &mut Engine<NvmeEvent>, core: usize) -> Result<()> {
        let now = engine.now();
        let batch = std::mem::take(&mut self.batches[core]);
        for (qp, c) in batch.retire {
            self.retire(qp, c, now)?;
        }
        let mut touched = Vec::new();
        for (qp, op) in batch.submit {
            if self.budget == Some(0) {
                break;
            }
            self.new_command(qp, op, now)?;
            if touched.last() != Some(&qp) {
                touched.push(qp);
            }
        }
        for qp in touched {
            self.ring_sq(engine, qp, Device::Cpu, SimTime::ZERO)?;
        }
        engine.schedule(SimTime::ZERO, self.core_ids[core], NvmeEvent::Poll { core })?;
        Ok(())
    }

    /// Drains the engine until `limit`; returns when the queue is empty or
    /// the limit is reached.
    pub fn run(&mut self, engine: &mut Engine<NvmeEvent>, limit: SimTime) -> Result<()> {
        engine.run(self, limit)?;
        Ok(())
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn records(&self) -> &[CmdRecord] {
        &self.records
    }

    pub fn retired_total(&self) -> u64 {
        self.retired_total
    }

    /// `(reads, writes)` retired since the window opened.
    pub fn retired_in_window(&self) -> (u64, u64) {
        (self.retired_in_window[0], self.retired_in_window[1])
    }

    pub fn empty_polls(&self) -> u64 {
        self.empty_polls
    }

    pub fn cpu(&self) -> &CpuModel {
        &self.cpu
    }

    /// Mean core busy fraction over `[window_start, end)`.
    pub fn core_utilization(&self, end: SimTime) -> Vec<f64> {
        let start = self.window_start.unwrap_or(SimTime::ZERO);
        self.cpu.utilization(&self.busy_at_window, start, end)
    }

    /// Largest SQ occupancy seen and the ring depth.
    pub fn max_sq_occupancy(&self) -> (u32, u32) {
        let m = self.qps.iter().map(|q| q.max_occupancy).max().unwrap_or(0);
        (m, self.cfg.queue_depth)
    }

    pub fn idle(&self) -> bool {
        self.qps.iter().all(|q| q.outstanding == 0)
    }

    pub fn queue_location(&self) -> QueueLocation {
        self.qps[0].sq.location
    }
}

impl Handler<NvmeEvent> for NvmeSystem {
    fn handle(&mut self, engine: &mut Engine<NvmeEvent>, ev: Event<NvmeEvent>) -> Result<()> {
        let now = engine.now();
        match ev.payload {
            NvmeEvent::SqDoorbell { qp, tail } => {
                let fetch = self.cfg.ssd.fetch_latency;
                let ssd = self.qps[qp].ssd;
                while self.qps[qp].fetched < tail {
                    let q = &mut self.qps[qp];
                    let cmd = q.sq.ring.pop().ok_or_else(|| {
                        SimError::Protocol(format!("doorbell past SQ tail on qp {qp}"))
                    })?;
                    q.fetched += 1;
                    self.records[cmd.tag as usize].doorbell = Some(now);
                    engine.schedule(fetch, self.ssd_ids[ssd], NvmeEvent::Fetched { qp, cmd })?;
                }
            }
            NvmeEvent::Fetched { qp, cmd } => {
                let ssd = self.qps[qp].ssd;
                if let Some(s) = self.ssds[ssd].arrive(now, qp, cmd) {
                    self.start_io(engine, ssd, s)?;
                }
            }
            NvmeEvent::IoDone { qp, cmd, dma } => {
                let ssd = self.qps[qp].ssd;
                let moved = self.fabric.complete_dma(dma)?;
                debug_assert_eq!(moved, cmd.bytes());
                if let Some(s) = self.ssds[ssd].release(now)? {
                    self.start_io(engine, ssd, s)?;
                }
                let cq_dev = match self.driver {
                    DriverKind::Cpu => Device::Cpu,
                    DriverKind::Fpga => Device::Fpga,
                };
                let delay = self
                    .fabric
                    .posted_latency(Device::Ssd(ssd as u16), cq_dev)?;
                let c = Completion {
                    cid: cmd.cid,
                    status: u16::from(cmd.opcode == Opcode::Write),
                    tag: cmd.tag,
                };
                let target = match self.qps[qp].core {
                    Some(core) => self.core_ids[core],
                    None => self.fpga_id,
                };
                engine.schedule(delay, target, NvmeEvent::CqArrive { qp, c })?;
            }
            NvmeEvent::CqArrive { qp, c } => {
                let r = &mut self.records[c.tag as usize];
                if r.completed.is_some() {
                    return Err(SimError::Protocol(format!(
                        "second completion for tag {}",
                        c.tag
                    )));
                }
                r.completed = Some(now);
                self.qps[qp].cq.post(c)?;
                if self.driver == DriverKind::Fpga {
                    engine.schedule(
                        self.cfg.fpga_capture,
                        self.fpga_id,
                        NvmeEvent::Capture { qp },
                    )?;
                }
            }
            NvmeEvent::Capture { qp } => {
                let c = self.qps[qp]
                    .cq
                    .consume()
                    .ok_or_else(|| SimError::Protocol(format!("capture on empty CQ {qp}")))?;
                self.retire(qp, c, now)?;
                if self.wants_submit(qp) {
                    self.fpga_submit(engine, qp)?;
                }
            }
            NvmeEvent::Poll { core } => self.poll(engine, core)?,
            NvmeEvent::CoreDone { core } => self.core_done(engine, core)?,
            NvmeEvent::WindowStart => {
                self.window_start = Some(now);
                self.busy_at_window = self.cpu.busy_snapshot(now);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::LinkModel;
    use crate::sim::Dist;

    fn quiet_fabric() -> FabricConfig {
        FabricConfig {
            pcie: LinkModel::new(850, 12_800).unwrap(),
            host: LinkModel::new(850, 12_800).unwrap(),
            ..FabricConfig::default()
        }
    }

    fn single(driver: DriverKind, buffer: Device) -> (Engine<NvmeEvent>, NvmeSystem) {
        let cfg = NvmeConfig {
            num_ssds: 1,
            ssd: SsdModel {
                read_latency: Dist::Constant(80_000),
                ..SsdModel::default()
            },
            ..NvmeConfig::default()
        };
        let w = Workload {
            outstanding_per_ssd: 1,
            total_commands: Some(1),
            fpga_buffer: buffer,
            ..Workload::default()
        };
        let mut e = Engine::new();
        let s = NvmeSystem::new(&mut e, cfg, quiet_fabric(), driver, 1, w, 0).unwrap();
        (e, s)
    }

    #[test]
    fn one_read_stage_sum() {
        let (mut e, mut s) = single(DriverKind::Fpga, Device::Fpga);
        s.start(&mut e, None).unwrap();
        s.run(&mut e, SimTime::MAX).unwrap();
        let r = s.records()[0];
        let doorbell = r.doorbell.unwrap();
        // fetch 1000 + media 80000 + DMA (850 + 320), then the CQ write
        let io = 1_000 + 80_000 + 1_170;
        assert_eq!(r.completed.unwrap() - doorbell, SimTime::ns(io + 850));
        assert_eq!(r.retired.unwrap() - r.completed.unwrap(), SimTime::ns(100));
        assert_eq!(s.fabric().bytes_moved(), 4096);
        assert_eq!(s.cpu().total_busy(), SimTime::ZERO);
    }

    #[test]
    fn gpu_buffer_goes_peer_to_peer() {
        let (mut e, mut s) = single(DriverKind::Fpga, Device::Gpu);
        s.start(&mut e, None).unwrap();
        s.run(&mut e, SimTime::MAX).unwrap();
        assert_eq!(s.retired_total(), 1);
        let route = s.fabric().route(Device::Ssd(0), Device::Gpu).unwrap();
        assert!(!route.touches(Device::Cpu));
        assert_eq!(s.cpu().total_busy(), SimTime::ZERO);
    }

    #[test]
    fn cpu_driver_charges_cores() {
        let (mut e, mut s) = single(DriverKind::Cpu, Device::Cpu);
        s.start(&mut e, None).unwrap();
        s.run(&mut e, SimTime::ms(1)).unwrap();
        assert_eq!(s.retired_total(), 1);
        assert!(s.cpu().total_busy() >= SimTime::ns(700));
        assert!(s.empty_polls() > 0);
    }

    #[test]
    fn slot_waves() {
        let cfg = NvmeConfig {
            num_ssds: 1,
            ssd: SsdModel {
                max_inflight: 128,
                read_iops: 1_000_000_000,
                read_latency: Dist::Constant(80_000),
                ..SsdModel::default()
            },
            fpga_issue: SimTime::ZERO,
            ..NvmeConfig::default()
        };
        let w = Workload {
            outstanding_per_ssd: 256,
            total_commands: Some(256),
            ..Workload::default()
        };
        let mut e = Engine::new();
        let mut s =
            NvmeSystem::new(&mut e, cfg, quiet_fabric(), DriverKind::Fpga, 0, w, 0).unwrap();
        s.start(&mut e, None).unwrap();
        s.run(&mut e, SimTime::MAX).unwrap();
        let mut done: Vec<u64> = s
            .records()
            .iter()
            .map(|r| r.completed.unwrap().as_ns())
            .collect();
        done.sort_unstable();
        let (first, second) = done.split_at(128);
        let gap = second[0] - first[127];
        // the second wave starts only when slots free, one media latency later
        assert!(gap >= 70_000, "gap {gap}");
        assert!(first[127] - first[0] < 10_000);
        assert!(second[127] - second[0] < 10_000);
    }
}
