use super::{append_trace, Common, ScenarioOutput};
use crate::config::SimConfig;
use crate::devices::GpuModel;
use crate::error::Result;
use crate::fabric::{Device, Fabric, SerialLink};
use crate::report::{num, Table};
use crate::sim::{
    ComponentId, Dist, Engine, Event, EventKind, Handler, Metrics, RngStream, SimTime,
};
use crate::switch::Switch;

const COLLECTIVE_DOORBELL: u64 = 0x100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// GEMM alone.
    Baseline,
    /// The collective runs as a GPU kernel and holds its SMs.
    OnGpu,
    /// The collective runs on the FPGA, started by a GPU doorbell.
    Offloaded,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Baseline => "baseline",
            Case::OnGpu => "on_gpu",
            Case::Offloaded => "offloaded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case: Case,
    /// GEMM duration from its start, in fractional ns.
    pub gemm_ns: f64,
    /// Absolute collective completion time; zero for the baseline.
    pub collective_end: SimTime,
    pub gemm_end: SimTime,
    pub bytes: u64,
}

impl CaseResult {
    pub fn total(&self) -> SimTime {
        self.gemm_end.max(self.collective_end)
    }
}

/// GEMM duration when a collective holding SMs runs over `[from, from+len)`
/// relative to GEMM start. `base` is the undisturbed duration.
pub fn interfered_gemm_ns(gpu: &GpuModel, flops: f64, from: f64, len: f64) -> Result<f64> {
    let base = gpu.gemm_ns(flops, false)?;
    let slow = gpu.slowdown();
    if from >= base || len <= 0.0 {
        return Ok(base);
    }
    if from <= 0.0 && len >= gpu.gemm_ns(flops, true)? {
        // covered end to end
        return gpu.gemm_ns(flops, true);
    }
    let before = from.max(0.0);
    let rest = base - before;
    let overlap = len - (before - from);
    if rest * slow <= overlap {
        Ok(before + rest * slow)
    } else {
        Ok(before + overlap + (rest - overlap / slow))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    GemmStart,
    GemmDone,
    Step(usize),
    CollectiveDone,
}

impl EventKind for Ev {
    fn kind(&self) -> &'static str {
        match self {
            Ev::GemmStart => "gemm-start",
            Ev::GemmDone => "gemm-done",
            Ev::Step(_) => "ring-step",
            Ev::CollectiveDone => "collective-done",
        }
    }
}

/// One ring all-reduce: `2(n-1)` steps, each moving `bytes/n` between ring
/// neighbours through the switch. All servers move in lockstep, so one
/// neighbour link stands for every one.
struct Ring {
    steps: usize,
    chunk: u64,
    mtu: u64,
    tx: Dist,
    rx: Dist,
    up: SerialLink,
    down: SerialLink,
    switch: Switch,
    rng: RngStream,
}

impl Ring {
    fn step_time(&mut self, now: SimTime) -> Result<SimTime> {
        let mut left = self.chunk;
        let mut last = now;
        let mut ready = now;
        while left > 0 {
            let pkt = left.min(self.mtu);
            left -= pkt;
            ready += self.tx.sample(&mut self.rng);
            let up = self.up.transmit(ready, pkt, &mut self.rng);
            let sw = self.switch.forward(up, pkt, 0, &[1])?;
            let down = self.down.transmit(sw[0].at, pkt, &mut self.rng);
            last = last.max(down);
        }
        Ok(last + self.rx.sample(&mut self.rng))
    }
}

struct World {
    case: Case,
    gpu: GpuModel,
    flops: f64,
    ring: Ring,
    gpu_id: ComponentId,
    collective_id: ComponentId,
    collective_start: SimTime,
    gemm_ns: f64,
    gemm_end: SimTime,
    collective_end: SimTime,
    moved: u64,
    servers: u64,
}

impl Handler<Ev> for World {
    fn handle(&mut self, engine: &mut Engine<Ev>, ev: Event<Ev>) -> Result<()> {
        let now = engine.now();
        match ev.payload {
            Ev::GemmStart => {
                // the collective's timeline is fixed up front, so the
                // GEMM's interfered length is known at launch
                let len = if self.case == Case::OnGpu {
                    let start = self.collective_start.as_ns() as f64 - now.as_ns() as f64;
                    let c = self.collective_end.saturating_sub(self.collective_start);
                    Some((start, c.as_ns() as f64))
                } else {
                    None
                };
                self.gemm_ns = match len {
                    Some((from, len)) => interfered_gemm_ns(&self.gpu, self.flops, from, len)?,
                    None => self.gpu.gemm_ns(self.flops, false)?,
                };
                engine.schedule(
                    SimTime::from_ns_f64_ceil(self.gemm_ns),
                    self.gpu_id,
                    Ev::GemmDone,
                )?;
            }
            Ev::GemmDone => self.gemm_end = now,
            Ev::Step(k) => {
                self.moved += self.ring.chunk * self.servers;
                if k + 1 < self.ring.steps {
                    let next = self.ring.step_time(now)?;
                    engine.schedule_at(next, self.collective_id, Ev::Step(k + 1))?;
                } else {
                    engine.schedule(SimTime::ZERO, self.collective_id, Ev::CollectiveDone)?;
                }
            }
            Ev::CollectiveDone => {
                debug_assert!(now == self.collective_end);
            }
        }
        Ok(())
    }
}

fn make_ring(cfg: &SimConfig, seed: u64, servers: u64, bytes: u64) -> Result<Ring> {
    let net = cfg.fabric.net.clone();
    Ok(Ring {
        steps: 2 * (servers as usize - 1),
        chunk: bytes.div_ceil(servers),
        mtu: cfg.transport.gbn.mtu,
        tx: cfg.transport.fpga_tx.clone(),
        rx: cfg.transport.fpga_rx.clone(),
        up: SerialLink::new(net.clone()),
        down: SerialLink::new(net),
        switch: Switch::new(cfg.switch.clone(), seed, "interference/switch")?,
        rng: RngStream::new(seed, "interference/ring"),
    })
}

pub fn run_case(
    cfg: &SimConfig,
    seed: u64,
    case: Case,
    trace: bool,
) -> Result<(CaseResult, String)> {
    let t = &cfg.tree;
    let servers = (t.uint("scenario.num_servers")).max(2);
    let bytes = t.uint("interference.collective_bytes");
    let flops = t.float("interference.gemm_gflop") * 1e9;
    let gpu = cfg.gpu.clone();
    gpu.validate()?;

    let mut engine = Engine::new();
    if trace {
        engine.enable_trace();
    }
    let gpu_id = engine.register("gpu");
    let collective_id = engine.register("collective");
    let launch = gpu.kernel_launch;
    // an on-GPU collective is a kernel launch; the offloaded one is a
    // single posted store from the GPU into the FPGA
    let collective_start = match case {
        Case::Baseline => None,
        Case::OnGpu => Some(launch),
        Case::Offloaded => {
            let mut fabric = Fabric::new(cfg.fabric.clone(), seed, "interference/fabric")
                .with_devices([Device::Gpu, Device::Fpga]);
            fabric
                .registers_mut(Device::Fpga)
                .define(COLLECTIVE_DOORBELL);
            let w = gpu.trigger_doorbell(&mut fabric, COLLECTIVE_DOORBELL, 1)?;
            fabric.deliver(&w)?;
            Some(w.delay)
        }
    };
    let mut ring = make_ring(cfg, seed, servers, bytes)?;
    // precompute the ring timeline with a cloned stream so the engine run
    // replays the same samples
    let mut collective_end = SimTime::ZERO;
    if let Some(start) = collective_start {
        let mut probe = make_ring(cfg, seed, servers, bytes)?;
        let mut at = start;
        for _ in 0..probe.steps {
            at = probe.step_time(at)?;
        }
        collective_end = at;
        let first = ring.step_time(start)?;
        engine.schedule_at(first, collective_id, Ev::Step(0))?;
    }
    engine.schedule_at(launch, gpu_id, Ev::GemmStart)?;
    let mut world = World {
        case,
        gpu,
        flops,
        ring,
        gpu_id,
        collective_id,
        collective_start: collective_start.unwrap_or(SimTime::ZERO),
        gemm_ns: 0.0,
        gemm_end: SimTime::ZERO,
        collective_end,
        moved: 0,
        servers,
    };
    engine.run(&mut world, SimTime::MAX)?;
    Ok((
        CaseResult {
            case,
            gemm_ns: world.gemm_ns,
            collective_end: world.collective_end,
            gemm_end: world.gemm_end,
            bytes: world.moved,
        },
        engine.trace_text(),
    ))
}

/// A fixed GEMM alone, beside an on-GPU collective, and beside a collective
/// offloaded to the FPGA.
pub fn run_interference(cfg: &SimConfig, trace: bool) -> Result<ScenarioOutput> {
    let common = Common::from_tree(&cfg.tree);
    let mut results = Vec::new();
    let mut trace_out = trace.then(String::new);
    for case in [Case::Baseline, Case::OnGpu, Case::Offloaded] {
        let (r, text) = run_case(cfg, common.seed, case, trace)?;
        append_trace(&mut trace_out, case.name(), text);
        results.push(r);
    }
    let base = results[0].gemm_ns;
    let mut table = Table::new(&[
        "case",
        "gemm_ns",
        "gemm_end_ns",
        "collective_end_ns",
        "total_ns",
        "slowdown",
        "overlap",
        "bytes",
    ]);
    let mut metrics = Metrics::new();
    for r in &results {
        let name = r.case.name();
        let sequential = r.gemm_end.as_ns() + r.collective_end.as_ns();
        let overlap = if r.case == Case::Baseline {
            0.0
        } else {
            1.0 - r.total().as_ns() as f64 / sequential as f64
        };
        table.push(vec![
            name.to_string(),
            num(r.gemm_ns),
            r.gemm_end.as_ns().to_string(),
            r.collective_end.as_ns().to_string(),
            r.total().as_ns().to_string(),
            num(r.gemm_ns / base),
            num(overlap),
            r.bytes.to_string(),
        ]);
        metrics.add(&format!("bytes/{name}"), r.bytes);
        metrics.push_point(&format!("total_ns/{name}"), 0.0, r.total().as_ns() as f64);
    }
    let notes = vec![format!(
        "on-GPU slowdown {} (SM ratio {}); offloaded slowdown {}",
        num(results[1].gemm_ns / base),
        num(cfg.gpu.slowdown()),
        num(results[2].gemm_ns / base)
    )];
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

    #[test]
    fn partial_overlap_is_piecewise() {
        let gpu = GpuModel::default();
        let flops = 1e12;
        let base = gpu.gemm_ns(flops, false).unwrap();
        let slow = gpu.slowdown();
        assert_eq!(
            interfered_gemm_ns(&gpu, flops, base * 2.0, 10.0).unwrap(),
            base
        );
        let half = base / 2.0;
        let got = interfered_gemm_ns(&gpu, flops, 0.0, half).unwrap();
        let want = half + (base - half / slow);
        assert!((got - want).abs() < 1e-6 * base);
        assert!(got > base && got < base * slow);
    }

    #[test]
    fn cases_move_identical_bytes() {
        let cfg = SimConfig::default();
        let out = run_interference(&cfg, false).unwrap();
        assert_eq!(out.metrics.counter("bytes/baseline"), 0);
        let a = out.metrics.counter("bytes/on_gpu");
        assert!(a > 0);
        assert_eq!(a, out.metrics.counter("bytes/offloaded"));
    }
}
