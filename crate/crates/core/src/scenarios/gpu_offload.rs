use super::{append_trace, drop_warmup, Common, ScenarioOutput};
use crate::config::SimConfig;
use crate::devices::{CpuCosts, CpuModel, GpuModel};
use crate::error::Result;
use crate::fabric::{BusAddr, Device, Fabric, LinkModel};
use crate::report::{latency_cells, num, Table, LATENCY_COLUMNS};
use crate::sim::{
    ComponentId, Engine, Event, EventKind, Handler, LatencyStats, Metrics, RngStream, SimTime,
};
use crate::transport::{Endpoint, EndpointModel, GbnChannel, GbnEvent};

const DOORBELL: u64 = 0x40;
const GPU_BUF: u64 = 1 << 20;

pub const WITH: &str = "net/with-offload";
pub const WITHOUT: &str = "net/without-offload";
pub const LOCAL: [(&str, Device, Device); 3] = [
    ("local/gpu-fpga", Device::Gpu, Device::Fpga),
    ("local/cpu-fpga", Device::Cpu, Device::Fpga),
    ("local/cpu-gpu", Device::Cpu, Device::Gpu),
];

/// Server-to-server hops: cable, switch, cable.
pub fn net_path(cfg: &SimConfig) -> Result<Vec<LinkModel>> {
    Ok(vec![
        cfg.fabric.net.clone(),
        cfg.switch.hop_link()?,
        cfg.fabric.net.clone(),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Start(usize),
    Send,
    Gbn(GbnEvent),
}

impl EventKind for Ev {
    fn kind(&self) -> &'static str {
        match self {
            Ev::Start(_) => "start",
            Ev::Send => "send",
            Ev::Gbn(g) => g.kind(),
        }
    }
}

struct World {
    offload: bool,
    src: Fabric,
    dst: Fabric,
    src_host: CpuModel,
    dst_host: CpuModel,
    costs: CpuCosts,
    gpu: GpuModel,
    rng: RngStream,
    chan: GbnChannel,
    chan_id: ComponentId,
    gpu_id: ComponentId,
    msg_bytes: u64,
    gap: SimTime,
    reps: usize,
    started: Vec<SimTime>,
    metrics: Metrics,
}

/// Runs `work` on the host's single core, skipping zero-cost items.
fn host_work(cpu: &mut CpuModel, now: SimTime, work: SimTime) -> Result<SimTime> {
    if work == SimTime::ZERO {
        return Ok(now);
    }
    cpu.core_execute(0, now, work)
}

fn dma_time(f: &mut Fabric, src: Device, dst: Device, bytes: u64) -> Result<SimTime> {
    let addr = |d| BusAddr::new(d, if d == Device::Gpu { GPU_BUF } else { 0 });
    let t = f.dma(addr(src), addr(dst), bytes)?;
    f.complete_dma(t.id)?;
    Ok(t.duration)
}

impl World {
    /// Sender side up to the moment the network stack has the payload.
    fn prologue(&mut self, now: SimTime) -> Result<SimTime> {
        let bytes = self.msg_bytes;
        if self.offload {
            let w =
                self.gpu
                    .trigger_doorbell(&mut self.src, DOORBELL, self.started.len() as u64)?;
            self.src.deliver(&w)?;
            return Ok(w.delay + dma_time(&mut self.src, Device::Gpu, Device::Fpga, bytes)?);
        }
        let flag = self.src.posted_latency(Device::Gpu, Device::Cpu)?;
        let work = self.costs.kernel_notify.sample(&mut self.rng)
            + self.costs.rdma_initiate.sample(&mut self.rng);
        let ready = host_work(&mut self.src_host, now + flag, work)?;
        let w = self.src.mmio_write(Device::Cpu, Device::Nic, DOORBELL, 1)?;
        self.src.deliver(&w)?;
        let dma = dma_time(&mut self.src, Device::Gpu, Device::Nic, bytes)?;
        Ok(ready - now + w.delay + dma)
    }

    /// Receiver side from message arrival to the GPU seeing the data.
    fn epilogue(&mut self, now: SimTime) -> Result<SimTime> {
        let bytes = self.msg_bytes;
        if self.offload {
            let dma = dma_time(&mut self.dst, Device::Fpga, Device::Gpu, bytes)?;
            return Ok(dma + self.dst.posted_latency(Device::Fpga, Device::Gpu)?);
        }
        let dma = dma_time(&mut self.dst, Device::Nic, Device::Gpu, bytes)?;
        let cqe = self.dst.posted_latency(Device::Nic, Device::Cpu)?;
        let work = self.costs.kernel_notify.sample(&mut self.rng);
        let notified = host_work(&mut self.dst_host, now + dma + cqe, work)?;
        Ok(notified - now + self.dst.posted_latency(Device::Cpu, Device::Gpu)?)
    }
}

impl Handler<Ev> for World {
    fn handle(&mut self, engine: &mut Engine<Ev>, ev: Event<Ev>) -> Result<()> {
        let now = engine.now();
        match ev.payload {
            Ev::Start(rep) => {
                self.started.push(now);
                let pre = self.prologue(now)?;
                engine.schedule(pre, self.chan_id, Ev::Send)?;
                if rep + 1 < self.reps {
                    engine.schedule(self.gap, self.gpu_id, Ev::Start(rep + 1))?;
                }
            }
            Ev::Send => {
                self.chan
                    .send(&mut engine.ctx(self.chan_id, Ev::Gbn), self.msg_bytes)?;
            }
            Ev::Gbn(g) => {
                let delivered = self
                    .chan
                    .handle(&mut engine.ctx(self.chan_id, Ev::Gbn), g)?;
                if let Some(d) = delivered {
                    let post = self.epilogue(now)?;
                    let start = self.started[d.msg.msg_seq as usize];
                    let label = if self.offload { WITH } else { WITHOUT };
                    self.metrics.record_latency(label, now + post - start);
                    self.metrics
                        .add(&format!("bytes/{label}"), d.msg.length_bytes);
                    if !d.intact {
                        self.metrics.add("corrupt", 1);
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
    offload: bool,
    trace: bool,
) -> Result<(Metrics, String)> {
    let t = &cfg.tree;
    let seed = common.seed;
    let tag = if offload { "with" } else { "without" };
    let servers = [Device::Cpu, Device::Gpu, Device::Fpga, Device::Nic];
    let mut engine = Engine::new();
    if trace {
        engine.enable_trace();
    }
    let gpu_id = engine.register("gpu-src");
    let chan_id = engine.register(if offload { "fpga-net" } else { "rdma-nic" });
    let mut src =
        Fabric::new(cfg.fabric.clone(), seed, &format!("fabric/{tag}/src")).with_devices(servers);
    let dst =
        Fabric::new(cfg.fabric.clone(), seed, &format!("fabric/{tag}/dst")).with_devices(servers);
    src.registers_mut(Device::Fpga)
        .define_doorbell(DOORBELL, chan_id);
    src.registers_mut(Device::Nic)
        .define_doorbell(DOORBELL, chan_id);
    // both stacks move packets in hardware; the difference is who drives them
    let tp = &cfg.transport;
    let ep = |side: &str| {
        Endpoint::new(
            EndpointModel::fpga(tp.fpga_tx.clone(), tp.fpga_rx.clone()),
            seed,
            &format!("ep/{tag}/{side}"),
        )
    };
    let chan = GbnChannel::new(
        0,
        tp.gbn.clone(),
        ep("src")?,
        ep("dst")?,
        &net_path(cfg)?,
        seed,
    )?;
    let mut world = World {
        offload,
        src,
        dst,
        src_host: CpuModel::new(1, cfg.cpu.clone()),
        dst_host: CpuModel::new(1, cfg.cpu.clone()),
        costs: cfg.cpu.clone(),
        gpu: cfg.gpu.clone(),
        rng: RngStream::new(seed, format!("gpu_offload/{tag}/host")),
        chan,
        chan_id,
        gpu_id,
        msg_bytes: t.uint("gpu_offload.msg_bytes"),
        gap: t.ns("gpu_offload.gap_ns"),
        reps: common.repetitions,
        started: Vec::new(),
        metrics: Metrics::new(),
    };
    engine.schedule(SimTime::ZERO, gpu_id, Ev::Start(0))?;
    engine.run(&mut world, SimTime::MAX)?;
    let mut m = world.metrics;
    m.add(&format!("retx/{tag}"), world.chan.stats().retx);
    m.add(
        &format!("host_busy_ns/{tag}"),
        (world.src_host.total_busy() + world.dst_host.total_busy()).as_ns(),
    );
    Ok((m, engine.trace_text()))
}

fn local_reads(cfg: &SimConfig, common: &Common) -> Result<Metrics> {
    let mut f = Fabric::new(cfg.fabric.clone(), common.seed, "fabric/local").with_devices([
        Device::Cpu,
        Device::Gpu,
        Device::Fpga,
    ]);
    f.registers_mut(Device::Fpga).define(DOORBELL);
    let mut m = Metrics::new();
    for _ in 0..common.repetitions {
        for (label, from, to) in LOCAL {
            let addr = if to == Device::Gpu { GPU_BUF } else { DOORBELL };
            let (_, rtt) = f.mmio_read(from, to, addr)?;
            m.record_latency(label, rtt);
        }
    }
    Ok(m)
}

/// Local MMIO read round trips plus the cross-server GPU-to-GPU message
/// latency with the FPGA driving the network and with the host driving it.
pub fn run_gpu_offload(cfg: &SimConfig, trace: bool) -> Result<ScenarioOutput> {
    let common = Common::from_tree(&cfg.tree);
    let mode = cfg.tree.string("gpu_offload.mode").to_string();
    let mut metrics = local_reads(cfg, &common)?;
    let mut trace_out = trace.then(String::new);
    for (offload, name) in [(true, "with"), (false, "without")] {
        if mode != "both" && mode != name {
            continue;
        }
        let (m, text) = run_mode(cfg, &common, offload, trace)?;
        metrics.merge(m);
        append_trace(&mut trace_out, name, text);
    }
    drop_warmup(&mut metrics, common.warmup);

    let mut header = vec!["path"];
    header.extend_from_slice(LATENCY_COLUMNS);
    let mut table = Table::new(&header);
    let mut notes = Vec::new();
    for (label, samples) in &metrics.latencies {
        let mut row = vec![label.clone()];
        row.extend(latency_cells(samples));
        table.push(row);
    }
    let stats = |l: &str| LatencyStats::from_samples(metrics.samples(l));
    if let (Some(w), Some(wo)) = (stats(WITH), stats(WITHOUT)) {
        notes.push(format!(
            "mean(with)/mean(without) = {}",
            num(w.mean / wo.mean)
        ));
    }
    if let (Some(g), Some(c)) = (stats("local/gpu-fpga"), stats("local/cpu-fpga")) {
        notes.push(format!(
            "variance gpu-fpga {} vs cpu-fpga {}",
            num(g.variance),
            num(c.variance)
        ));
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

    fn quiet() -> SimConfig {
        let mut t = ConfigTree::defaults();
        for k in [
            "fabric.pcie.jitter",
            "fabric.host.jitter",
            "fabric.net.jitter",
        ] {
            t.set(k, "constant(0)").unwrap();
        }
        t.set("switch.pipeline", "constant(1000)").unwrap();
        t.set("cpu.kernel_notify", "constant(0)").unwrap();
        t.set("cpu.rdma_initiate", "constant(0)").unwrap();
        t.set("gpu_offload.msg_bytes", "4000").unwrap();
        t.set("scenario.repetitions", "20").unwrap();
        t.set("scenario.warmup", "0").unwrap();
        SimConfig::from_tree(&t).unwrap()
    }

    #[test]
    fn zero_jitter_reduces_to_route_sums() {
        let cfg = quiet();
        let out = run_gpu_offload(&cfg, false).unwrap();
        let b = 4000;
        let (pcie, host) = (&cfg.fabric.pcie, &cfg.fabric.host);
        let net: SimTime = net_path(&cfg)
            .unwrap()
            .iter()
            .map(|l| l.nominal_time(b))
            .sum();
        // endpoint tx and rx, plus the constant switch pipeline
        let stack = SimTime::ns(80 + 1000);
        let with = pcie.nominal_time(0)
            + pcie.nominal_time(b)
            + stack
            + net
            + pcie.nominal_time(b)
            + pcie.nominal_time(0);
        let without = host.nominal_time(0) * 2
            + pcie.nominal_time(b)
            + stack
            + net
            + pcie.nominal_time(b)
            + host.nominal_time(0) * 2;
        assert!(out.metrics.samples(WITH).iter().all(|&s| s == with.as_ns()));
        assert!(out
            .metrics
            .samples(WITHOUT)
            .iter()
            .all(|&s| s == without.as_ns()));
        assert_eq!(out.metrics.samples("local/cpu-gpu")[0], 1_700);
    }

    #[test]
    fn modes_move_identical_bytes() {
        let out = run_gpu_offload(&quiet(), false).unwrap();
        let c = &out.metrics.counters;
        assert_eq!(c[&format!("bytes/{WITH}")], c[&format!("bytes/{WITHOUT}")]);
        assert_eq!(c[&format!("bytes/{WITH}")], 20 * 4000);
        assert!(!c.contains_key("corrupt"));
    }
}
