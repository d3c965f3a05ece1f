use super::{append_trace, drop_warmup, Common, ScenarioOutput};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::fabric::{BusAddr, Device, Fabric, LinkModel, SerialLink};
use crate::report::{latency_cells, num, Table, LATENCY_COLUMNS};
use crate::sim::{
    ComponentId, Engine, Event, EventKind, Handler, LatencyStats, Metrics, RngStream, SimTime,
};
use crate::switch::Switch;
use crate::transport::{Direction, Endpoint, EndpointModel};

const SESSION: u32 = 1;
const DOORBELL: u64 = 0x80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Round(usize),
    AtSwitch { round: usize, worker: usize },
    Result { round: usize, worker: usize },
}

impl EventKind for Ev {
    fn kind(&self) -> &'static str {
        match self {
            Ev::Round(_) => "round",
            Ev::AtSwitch { .. } => "switch-ingress",
            Ev::Result { .. } => "result",
        }
    }
}

struct World {
    label: &'static str,
    host_stack: bool,
    workers: usize,
    slots: usize,
    rounds: usize,
    gap: SimTime,
    bytes: u64,
    switch: Switch,
    endpoints: Vec<Endpoint>,
    hosts: Vec<Fabric>,
    uplinks: Vec<SerialLink>,
    cable: LinkModel,
    rng: RngStream,
    worker_ids: Vec<ComponentId>,
    switch_id: ComponentId,
    contributions: Vec<Vec<u32>>,
    expected: Vec<u32>,
    result: Vec<u32>,
    sent: SimTime,
    received: usize,
    latency_sum: u64,
    metrics: Metrics,
}

impl World {
    fn dma(&mut self, w: usize, src: Device, dst: Device) -> Result<SimTime> {
        let f = &mut self.hosts[w];
        let t = f.dma(BusAddr::new(src, 0), BusAddr::new(dst, 0), self.bytes)?;
        f.complete_dma(t.id)?;
        Ok(t.duration)
    }

    /// Time the worker's contribution is on the wire, leaving the server.
    fn egress(&mut self, w: usize, now: SimTime) -> Result<SimTime> {
        let done = self.endpoints[w].process(Direction::Tx, now);
        if !self.host_stack {
            return Ok(done);
        }
        let f = &mut self.hosts[w];
        let db = f.mmio_write(Device::Cpu, Device::Nic, DOORBELL, 1)?;
        f.deliver(&db)?;
        Ok(done + db.delay + self.dma(w, Device::Cpu, Device::Nic)?)
    }

    /// Time the result is visible to the worker, given wire arrival.
    fn ingress(&mut self, w: usize, at: SimTime) -> Result<SimTime> {
        let at = if self.host_stack {
            at + self.dma(w, Device::Nic, Device::Cpu)?
        } else {
            at
        };
        Ok(self.endpoints[w].process(Direction::Rx, at))
    }
}

impl Handler<Ev> for World {
    fn handle(&mut self, engine: &mut Engine<Ev>, ev: Event<Ev>) -> Result<()> {
        let now = engine.now();
        match ev.payload {
            Ev::Round(round) => {
                self.contributions = (0..self.workers)
                    .map(|_| {
                        (0..self.slots)
                            .map(|_| self.rng.next_u64() as u32)
                            .collect()
                    })
                    .collect();
                self.expected = vec![0; self.slots];
                for c in &self.contributions {
                    for (e, v) in self.expected.iter_mut().zip(c) {
                        *e = e.wrapping_add(*v);
                    }
                }
                self.sent = now;
                self.received = 0;
                self.latency_sum = 0;
                for worker in 0..self.workers {
                    let ready = self.egress(worker, now)?;
                    let arrive = self.uplinks[worker].transmit(ready, self.bytes, &mut self.rng);
                    let processed = arrive + self.switch.pipeline_sample();
                    engine.schedule_at(
                        processed,
                        self.switch_id,
                        Ev::AtSwitch { round, worker },
                    )?;
                }
            }
            Ev::AtSwitch { round, worker } => {
                let values = &self.contributions[worker];
                if let Some(sum) = self.switch.contribute(SESSION, worker, values)? {
                    self.result = sum;
                    let ports: Vec<u32> = (0..self.workers as u32).collect();
                    for d in self.switch.egress_at(now, self.bytes, &ports) {
                        let w = d.port as usize;
                        let wire = d.at + self.cable.traversal_time(0, &mut self.rng);
                        let seen = self.ingress(w, wire)?;
                        engine.schedule_at(
                            seen,
                            self.worker_ids[w],
                            Ev::Result { round, worker: w },
                        )?;
                    }
                }
            }
            Ev::Result { round, worker: _ } => {
                self.received += 1;
                self.latency_sum += (now - self.sent).as_ns();
                if self.received == self.workers {
                    if self.result != self.expected {
                        self.metrics.add(&format!("mismatch/{}", self.label), 1);
                    }
                    self.metrics.add(&format!("rounds/{}", self.label), 1);
                    let mean = (self.latency_sum as f64 / self.workers as f64).round() as u64;
                    self.metrics.record_latency(self.label, SimTime::ns(mean));
                    if round + 1 < self.rounds {
                        engine.schedule(self.gap, self.switch_id, Ev::Round(round + 1))?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn run_mode(
    cfg: &SimConfig,
    common: &Common,
    host_stack: bool,
    trace: bool,
) -> Result<(Metrics, String)> {
    let t = &cfg.tree;
    let seed = common.seed;
    let workers = common.num_servers;
    let slots = t.uint("inaggr.slots") as usize;
    let label = if host_stack { "cpu" } else { "fpga" };
    if workers > cfg.switch.num_ports as usize {
        return Err(SimError::Config(format!(
            "{workers} workers exceed {} switch ports",
            cfg.switch.num_ports
        )));
    }
    let mut engine = Engine::new();
    if trace {
        engine.enable_trace();
    }
    let switch_id = engine.register("switch");
    let worker_ids = (0..workers)
        .map(|w| engine.register(format!("worker{w}")))
        .collect();
    let mut switch = Switch::new(cfg.switch.clone(), seed, &format!("switch/{label}"))?;
    switch.open_session(SESSION, workers, slots)?;
    let tp = &cfg.transport;
    let model = if host_stack {
        EndpointModel::cpu(tp.cpu_tx.clone(), tp.cpu_rx.clone(), tp.cpu_cores)
    } else {
        EndpointModel::fpga(tp.fpga_tx.clone(), tp.fpga_rx.clone())
    };
    let endpoints = (0..workers)
        .map(|w| Endpoint::new(model.clone(), seed, &format!("inaggr/{label}/ep{w}")))
        .collect::<Result<_>>()?;
    let hosts = (0..workers)
        .map(|w| {
            Fabric::new(cfg.fabric.clone(), seed, &format!("inaggr/{label}/host{w}"))
                .with_devices([Device::Cpu, Device::Nic])
        })
        .collect::<Vec<_>>();
    let mut hosts = hosts;
    for h in &mut hosts {
        h.registers_mut(Device::Nic).define(DOORBELL);
    }
    let net = cfg.fabric.net.clone();
    // the switch egress port serialises; the return cable only adds delay
    let cable =
        LinkModel::new(net.base_latency.as_ns(), u64::MAX / 2)?.with_jitter(net.jitter.clone());
    let mut world = World {
        label,
        host_stack,
        workers,
        slots,
        rounds: common.repetitions,
        gap: t.ns("inaggr.gap_ns"),
        bytes: slots as u64 * 4 + tp.gbn.header_bytes,
        switch,
        endpoints,
        hosts,
        uplinks: vec![SerialLink::new(net); workers],
        cable,
        rng: RngStream::new(seed, format!("inaggr/{label}")),
        worker_ids,
        switch_id,
        contributions: Vec::new(),
        expected: Vec::new(),
        result: Vec::new(),
        sent: SimTime::ZERO,
        received: 0,
        latency_sum: 0,
        metrics: Metrics::new(),
    };
    engine.schedule(SimTime::ZERO, switch_id, Ev::Round(0))?;
    engine.run(&mut world, SimTime::MAX)?;
    let busy: SimTime = world.endpoints.iter().map(Endpoint::core_busy).sum();
    world
        .metrics
        .add(&format!("host_busy_ns/{label}"), busy.as_ns());
    Ok((world.metrics, engine.trace_text()))
}

/// Repeated switch-aggregation rounds; each sample is the mean over workers
/// of contribute-to-result latency for one round.
pub fn run_inaggr(cfg: &SimConfig, trace: bool) -> Result<ScenarioOutput> {
    let common = Common::from_tree(&cfg.tree);
    let mode = cfg.tree.string("inaggr.mode").to_string();
    let mut metrics = Metrics::new();
    let mut trace_out = trace.then(String::new);
    for (host_stack, name) in [(false, "fpga"), (true, "cpu")] {
        if mode != "both" && mode != name {
            continue;
        }
        let (m, text) = run_mode(cfg, &common, host_stack, trace)?;
        metrics.merge(m);
        append_trace(&mut trace_out, name, text);
    }
    drop_warmup(&mut metrics, common.warmup);

    let mut header = vec!["mode", "workers", "slots"];
    header.extend_from_slice(LATENCY_COLUMNS);
    header.push("mismatches");
    let mut table = Table::new(&header);
    for (label, samples) in &metrics.latencies {
        let mut row = vec![
            label.clone(),
            common.num_servers.to_string(),
            cfg.tree.uint("inaggr.slots").to_string(),
        ];
        row.extend(latency_cells(samples));
        row.push(metrics.counter(&format!("mismatch/{label}")).to_string());
        table.push(row);
    }
    let mut notes = Vec::new();
    let mean = |l: &str| LatencyStats::from_samples(metrics.samples(l)).map(|s| s.mean);
    if let (Some(f), Some(c)) = (mean("fpga"), mean("cpu")) {
        notes.push(format!("mean cpu / mean fpga = {}", num(c / f)));
    }
    Ok(ScenarioOutput {
        table,
        metrics,
        trace: trace_out,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigTree;

    #[test]
    fn sums_exact_in_both_modes() {
        let mut t = ConfigTree::defaults();
        t.set("scenario.repetitions", "50").unwrap();
        t.set("scenario.warmup", "5").unwrap();
        let out = run_inaggr(&SimConfig::from_tree(&t).unwrap(), false).unwrap();
        for mode in ["fpga", "cpu"] {
            assert_eq!(out.metrics.counter(&format!("rounds/{mode}")), 50);
            assert_eq!(out.metrics.counter(&format!("mismatch/{mode}")), 0);
            assert_eq!(out.metrics.samples(mode).len(), 45);
        }
        assert_eq!(out.metrics.counter("host_busy_ns/fpga"), 0);
        assert!(out.metrics.counter("host_busy_ns/cpu") > 0);
    }

    #[test]
    fn too_many_workers() {
        let mut t = ConfigTree::defaults();
        t.set("scenario.num_servers", "40").unwrap();
        let err = run_inaggr(&SimConfig::from_tree(&t).unwrap(), false).unwrap_err();
        assert_eq!(err.category(), "config");
    }
}
