use std::collections::VecDeque;

use rayon::prelude::*;

use super::{append_trace, Common, ScenarioOutput};
use crate::config::SimConfig;
use crate::devices::{CompressionEngine, CpuModel, Placement};
use crate::error::{Result, SimError};
use crate::fabric::{LinkModel, SerialLink};
use crate::report::{num, Table};
use crate::sim::{
    ComponentId, Engine, Event, EventKind, Handler, LatencyStats, Metrics, RngStream, SimTime,
};
use crate::switch::Switch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierMode {
    /// Compression runs on the request's core.
    CpuOnly,
    /// Cores only drive control; the FPGA compresses in line.
    CpuFpga,
}

impl TierMode {
    pub fn name(self) -> &'static str {
        match self {
            TierMode::CpuOnly => "cpu_only",
            TierMode::CpuFpga => "cpu_fpga",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierParams {
    pub request_bytes: u64,
    pub offered_gbps: f64,
    pub max_outstanding: usize,
    /// Acks awaited before a request counts as done.
    pub acks_needed: usize,
    pub disk_servers: usize,
    pub fpga_ports: usize,
    pub warmup: SimTime,
    pub window: SimTime,
}

impl TierParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let t = &cfg.tree;
        let disk_servers = t.uint("middletier.disk_servers") as usize;
        TierParams {
            request_bytes: t.uint("middletier.request_bytes"),
            offered_gbps: t.float("middletier.offered_gbps"),
            max_outstanding: t.uint("middletier.max_outstanding") as usize,
            acks_needed: if t.string("middletier.replication") == "all" {
                disk_servers
            } else {
                1
            },
            disk_servers,
            fpga_ports: t.uint("middletier.fpga_ports") as usize,
            warmup: SimTime::us(t.uint("middletier.warmup_us")),
            window: SimTime::us(t.uint("middletier.window_us")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Issue,
    Received(usize),
    CoreDone { core: usize, req: usize },
    Compressed(usize),
    Ack(usize),
}

impl EventKind for Ev {
    fn kind(&self) -> &'static str {
        match self {
            Ev::Issue => "issue",
            Ev::Received(_) => "received",
            Ev::CoreDone { .. } => "core-done",
            Ev::Compressed(_) => "compressed",
            Ev::Ack(_) => "replica-ack",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Request {
    arrived: SimTime,
    picked: SimTime,
    acks: usize,
    done: bool,
}

struct World {
    mode: TierMode,
    p: TierParams,
    interval: SimTime,
    cpu: CpuModel,
    idle: Vec<bool>,
    compressor: CompressionEngine,
    switch: Switch,
    ingress: SerialLink,
    egress: Vec<SerialLink>,
    disk_up: Vec<SerialLink>,
    cable: LinkModel,
    fpga_tx: crate::sim::Dist,
    fpga_rx: crate::sim::Dist,
    mtu: u64,
    ack_bytes: u64,
    rng: RngStream,
    gen_id: ComponentId,
    core_ids: Vec<ComponentId>,
    fpga_id: ComponentId,
    requests: Vec<Request>,
    backlog: VecDeque<usize>,
    outstanding: usize,
    blocked: bool,
    next_due: SimTime,
    done_bytes: u64,
    metrics: Metrics,
}

impl World {
    fn in_window(&self, t: SimTime) -> bool {
        t >= self.p.warmup && t < self.p.warmup + self.p.window
    }

    fn issue(&mut self, engine: &mut Engine<Ev>) -> Result<()> {
        let now = engine.now();
        let req = self.requests.len();
        self.requests.push(Request::default());
        self.outstanding += 1;
        let wire = self
            .ingress
            .transmit(now, self.p.request_bytes, &mut self.rng);
        let seen = wire + self.fpga_rx.sample(&mut self.rng);
        engine.schedule_at(seen, self.fpga_id, Ev::Received(req))?;
        self.next_due = now + self.interval;
        Ok(())
    }

    /// Hands backlog requests to idle cores; a core takes a new request
    /// only once its previous work is finished.
    fn dispatch(&mut self, engine: &mut Engine<Ev>) -> Result<()> {
        let now = engine.now();
        while !self.backlog.is_empty() {
            let Some(core) = self.idle.iter().position(|&i| i) else {
                break;
            };
            let req = self.backlog.pop_front().expect("non-empty");
            self.idle[core] = false;
            self.requests[req].picked = now;
            let costs = &self.cpu.costs;
            let control = costs.kernel_notify.sample(&mut self.rng)
                + costs.rdma_initiate.sample(&mut self.rng);
            let mut done = self
                .cpu
                .core_execute(core, now, control.max(SimTime::ns(1)))?;
            if self.mode == TierMode::CpuOnly {
                done = self
                    .compressor
                    .compress(done, self.p.request_bytes, &mut self.cpu, Some(core))?
                    .done;
            }
            engine.schedule_at(done, self.core_ids[core], Ev::CoreDone { core, req })?;
        }
        Ok(())
    }

    /// Sends one compressed copy to every disk server and schedules the
    /// returning acks.
    fn replicate(&mut self, engine: &mut Engine<Ev>, req: usize) -> Result<()> {
        let now = engine.now();
        let out = self.compressor.output_bytes(self.p.request_bytes);
        let ports = self.p.fpga_ports;
        for d in 0..self.p.disk_servers {
            let port = d % ports;
            let mut last = now;
            let mut left = out;
            while left > 0 {
                let pkt = left.min(self.mtu);
                left -= pkt;
                let ready = now + self.fpga_tx.sample(&mut self.rng);
                let up = self.egress[port].transmit(ready, pkt, &mut self.rng);
                let sw = self
                    .switch
                    .forward(up, pkt, port as u32, &[(ports + d) as u32])?;
                last = last.max(sw[0].at + self.cable.traversal_time(0, &mut self.rng));
            }
            let written =
                last + self.fpga_rx.sample(&mut self.rng) + self.fpga_tx.sample(&mut self.rng);
            let up = self.disk_up[d].transmit(written, self.ack_bytes, &mut self.rng);
            let sw = self
                .switch
                .forward(up, self.ack_bytes, (ports + d) as u32, &[port as u32])?;
            let back = sw[0].at
                + self.cable.traversal_time(0, &mut self.rng)
                + self.fpga_rx.sample(&mut self.rng);
            engine.schedule_at(back, self.fpga_id, Ev::Ack(req))?;
        }
        self.metrics
            .add("replica_bytes", out * self.p.disk_servers as u64);
        Ok(())
    }
}

impl Handler<Ev> for World {
    fn handle(&mut self, engine: &mut Engine<Ev>, ev: Event<Ev>) -> Result<()> {
        let now = engine.now();
        match ev.payload {
            Ev::Issue => {
                if self.outstanding < self.p.max_outstanding {
                    self.issue(engine)?;
                    engine.schedule(self.interval, self.gen_id, Ev::Issue)?;
                } else {
                    self.blocked = true;
                }
            }
            Ev::Received(req) => {
                self.requests[req].arrived = now;
                self.backlog.push_back(req);
                self.dispatch(engine)?;
            }
            Ev::CoreDone { core, req } => {
                self.idle[core] = true;
                match self.mode {
                    TierMode::CpuOnly => self.replicate(engine, req)?,
                    TierMode::CpuFpga => {
                        let c = self.compressor.compress(
                            now,
                            self.p.request_bytes,
                            &mut self.cpu,
                            None,
                        )?;
                        engine.schedule_at(c.done, self.fpga_id, Ev::Compressed(req))?;
                    }
                }
                self.dispatch(engine)?;
            }
            Ev::Compressed(req) => self.replicate(engine, req)?,
            Ev::Ack(req) => {
                let r = &mut self.requests[req];
                r.acks += 1;
                if r.done || r.acks < self.p.acks_needed {
                    return Ok(());
                }
                r.done = true;
                let latency = now - r.picked;
                let sojourn = now - r.arrived;
                self.outstanding -= 1;
                if self.in_window(now) {
                    self.done_bytes += self.p.request_bytes;
                    self.metrics.record_latency("latency", latency);
                    self.metrics.record_latency("sojourn", sojourn);
                }
                if self.blocked {
                    self.blocked = false;
                    engine.schedule_at(self.next_due.max(now), self.gen_id, Ev::Issue)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TierResult {
    pub mode: TierMode,
    pub cores: usize,
    pub gbps: f64,
    /// From a core picking the request up to its last needed ack.
    pub latency: Option<LatencyStats>,
    /// From arrival at the FPGA, so including backlog wait.
    pub sojourn: Option<LatencyStats>,
    pub core_util: Vec<f64>,
    pub metrics: Metrics,
    pub trace: String,
}

pub fn run_tier_job(
    cfg: &SimConfig,
    seed: u64,
    mode: TierMode,
    cores: usize,
    trace: bool,
) -> Result<TierResult> {
    let p = TierParams::from_config(cfg);
    if p.disk_servers + p.fpga_ports > cfg.switch.num_ports as usize {
        return Err(SimError::Config(
            "middle tier needs more switch ports than configured".into(),
        ));
    }
    let tag = format!("middletier/{}/{cores}", mode.name());
    let mut engine = Engine::new();
    if trace {
        engine.enable_trace();
    }
    let gen_id = engine.register("generator");
    let core_ids = (0..cores)
        .map(|c| engine.register(format!("core{c}")))
        .collect();
    let fpga_id = engine.register("fpga");
    let placement = match mode {
        TierMode::CpuOnly => Placement::Cpu,
        TierMode::CpuFpga => Placement::Fpga,
    };
    let cc = &cfg.compress;
    let net = cfg.fabric.net.clone();
    let interval_ns = (p.request_bytes as f64 * 8.0 / p.offered_gbps).ceil() as u64;
    let mut world = World {
        mode,
        interval: SimTime::ns(interval_ns.max(1)),
        cpu: CpuModel::new(cores, cfg.cpu.clone()),
        idle: vec![true; cores],
        compressor: CompressionEngine::new(placement, cc.ratio, cc.fpga_gbps, cc.fpga_pipeline)?,
        switch: Switch::new(cfg.switch.clone(), seed, &format!("{tag}/switch"))?,
        ingress: SerialLink::new(net.clone()),
        egress: vec![SerialLink::new(net.clone()); p.fpga_ports],
        disk_up: vec![SerialLink::new(net.clone()); p.disk_servers],
        cable: LinkModel::new(net.base_latency.as_ns(), u64::MAX / 2)?
            .with_jitter(net.jitter.clone()),
        fpga_tx: cfg.transport.fpga_tx.clone(),
        fpga_rx: cfg.transport.fpga_rx.clone(),
        mtu: cfg.transport.gbn.mtu,
        ack_bytes: cfg.transport.gbn.ack_bytes,
        rng: RngStream::new(seed, tag.clone()),
        gen_id,
        core_ids,
        fpga_id,
        requests: Vec::new(),
        backlog: VecDeque::new(),
        outstanding: 0,
        blocked: false,
        next_due: SimTime::ZERO,
        done_bytes: 0,
        metrics: Metrics::new(),
        p,
    };
    engine.schedule(SimTime::ZERO, gen_id, Ev::Issue)?;
    let start = world.p.warmup;
    let end = start + world.p.window;
    let mut snapshot = Vec::new();
    while engine.step(&mut world, start)? {}
    if cores > 0 {
        snapshot = world.cpu.busy_snapshot(start);
    }
    while engine.step(&mut world, end)? {}
    let core_util = world.cpu.utilization(&snapshot, start, end);
    let gbps = world.done_bytes as f64 * 8.0 / world.p.window.as_ns() as f64;
    let latency = LatencyStats::from_samples(world.metrics.samples("latency"));
    let sojourn = LatencyStats::from_samples(world.metrics.samples("sojourn"));
    let (bytes_in, bytes_out) = world.compressor.bytes();
    world.metrics.add("compressed_in", bytes_in);
    world.metrics.add("compressed_out", bytes_out);
    Ok(TierResult {
        mode,
        cores,
        gbps,
        latency,
        sojourn,
        core_util,
        metrics: world.metrics,
        trace: engine.trace_text(),
    })
}

/// Throughput and in-server latency of the storage middle tier against the
/// number of cores, for CPU and FPGA compression.
pub fn run_middletier(cfg: &SimConfig, trace: bool) -> Result<ScenarioOutput> {
    let t = &cfg.tree;
    let common = Common::from_tree(t);
    let mode = t.string("middletier.mode");
    let mut jobs = Vec::new();
    for m in [TierMode::CpuOnly, TierMode::CpuFpga] {
        if mode != "both" && mode != m.name() {
            continue;
        }
        jobs.extend(
            t.int_list("middletier.cores")
                .into_iter()
                .map(|c| (m, c as usize)),
        );
    }
    let results: Vec<TierResult> = jobs
        .par_iter()
        .map(|&(m, c)| run_tier_job(cfg, common.seed, m, c, trace))
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "mode",
        "cores",
        "throughput_gbps",
        "requests",
        "mean_latency_ns",
        "p99_latency_ns",
        "mean_sojourn_ns",
        "cpu_util",
    ]);
    let mut metrics = Metrics::new();
    let mut trace_out = trace.then(String::new);
    let mut notes = Vec::new();
    for r in results {
        let name = r.mode.name();
        let util = if r.core_util.is_empty() {
            0.0
        } else {
            r.core_util.iter().sum::<f64>() / r.core_util.len() as f64
        };
        let (count, mean, p99) = match r.latency {
            Some(s) => (s.count.to_string(), num(s.mean), s.p99.to_string()),
            None => ("0".into(), String::new(), String::new()),
        };
        table.push(vec![
            name.to_string(),
            r.cores.to_string(),
            num(r.gbps),
            count,
            mean,
            p99,
            r.sojourn.map(|s| num(s.mean)).unwrap_or_default(),
            num(util),
        ]);
        metrics.push_point(&format!("gbps/{name}"), r.cores as f64, r.gbps);
        if let Some(s) = r.latency {
            metrics.push_point(&format!("latency/{name}"), r.cores as f64, s.mean);
        }
        metrics.add(
            &format!("replica_bytes/{name}"),
            r.metrics.counter("replica_bytes"),
        );
        append_trace(&mut trace_out, &format!("{name}/{}", r.cores), r.trace);
    }
    for name in ["cpu_only", "cpu_fpga"] {
        let pts = metrics.points(&format!("gbps/{name}"));
        if let Some(best) = pts.iter().map(|p| p.1).reduce(f64::max) {
            let knee = pts.iter().find(|p| p.1 >= 0.99 * best).map(|p| p.0);
            notes.push(format!(
                "{name}: plateau {} Gb/s, reached at {:?} cores",
                num(best),
                knee.unwrap_or(0.0)
            ));
        }
    }
    Ok(ScenarioOutput {
        table,
        metrics,
        trace: trace_out,
        notes,
    })
}
