//! Intra-server PCIe (MMIO, DMA, peer-to-peer) and inter-server Ethernet
//! cost models, including the GPU BAR-window constraint on P2P access.

mod bar;
mod link;
mod mmio;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub use bar::{GpuBarWindow, GIB, MIB};
pub use link::{route_time, LinkModel, SerialLink};
pub use mmio::MmioRegisterFile;

use crate::error::{Result, SimError};
use crate::sim::{ComponentId, Dist, RngStream, SimTime};

/// A PCIe endpoint inside one server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Device {
    Cpu,
    Gpu,
    Fpga,
    Nic,
    Ssd(u16),
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Device::Cpu => f.write_str("cpu"),
            Device::Gpu => f.write_str("gpu"),
            Device::Fpga => f.write_str("fpga"),
            Device::Nic => f.write_str("nic"),
            Device::Ssd(i) => write!(f, "ssd{i}"),
        }
    }
}

/// Link profiles. The PCIe and Ethernet numbers are calibration constants,
/// not measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct FabricConfig {
    /// Device-to-device peer traffic through the PCIe switch.
    pub pcie: LinkModel,
    /// Traffic to or from the host CPU / root complex.
    pub host: LinkModel,
    /// One Ethernet hop (cable + PHY/MAC).
    pub net: LinkModel,
    pub gpu_bar_bytes: u64,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            pcie: LinkModel::new(850, 12_800)
                .unwrap()
                .with_jitter(Dist::Uniform { lo: 0, hi: 40 }),
            host: LinkModel::new(850, 12_800)
                .unwrap()
                .with_jitter(Dist::Uniform { lo: 0, hi: 400 }),
            net: LinkModel::new(25, 12_500).unwrap().with_mtu(4096),
            gpu_bar_bytes: 31 * GIB,
        }
    }
}

/// Ordered PCIe traversals between two devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Vec<Device>,
    pub links: Vec<LinkModel>,
}

impl Route {
    pub fn touches(&self, d: Device) -> bool {
        self.path.contains(&d)
    }

    pub fn nominal_time(&self, bytes: u64) -> SimTime {
        self.links.iter().map(|l| l.nominal_time(bytes)).sum()
    }
}

/// `(device, bus address)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusAddr {
    pub device: Device,
    pub addr: u64,
}

impl BusAddr {
    pub fn new(device: Device, addr: u64) -> Self {
        BusAddr { device, addr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub src: BusAddr,
    pub dst: BusAddr,
    pub bytes: u64,
    pub route: Route,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransferId(pub u64);

/// A started DMA: completes `duration` after it was issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmaTicket {
    pub id: TransferId,
    pub duration: SimTime,
    pub bytes: u64,
}

/// A posted MMIO write in flight. The register changes, and the doorbell
/// handler is notified, only when [`Fabric::deliver`] is called `delay`
/// after issue.
#[derive(Debug, Clone, PartialEq)]
pub struct PostedWrite {
    pub initiator: Device,
    pub target: Device,
    pub addr: u64,
    pub value: u64,
    pub delay: SimTime,
    pub handler: Option<ComponentId>,
}

/// Per-server PCIe fabric.
#[derive(Debug, Clone)]
pub struct Fabric {
    cfg: FabricConfig,
    devices: BTreeSet<Device>,
    registers: HashMap<Device, MmioRegisterFile>,
    bar: GpuBarWindow,
    rng: RngStream,
    next_transfer: u64,
    inflight: HashMap<TransferId, u64>,
    bytes_moved: u64,
    dma_started: u64,
    dma_completed: u64,
}

/// MMIO payloads are 8 bytes and latency-dominated: no serialisation term.
const MMIO_BYTES: u64 = 0;

impl Fabric {
    pub fn new(cfg: FabricConfig, seed: u64, stream: &str) -> Self {
        let bar = GpuBarWindow::fully_mapped(cfg.gpu_bar_bytes);
        Fabric {
            cfg,
            devices: BTreeSet::new(),
            registers: HashMap::new(),
            bar,
            rng: RngStream::new(seed, stream),
            next_transfer: 0,
            inflight: HashMap::new(),
            bytes_moved: 0,
            dma_started: 0,
            dma_completed: 0,
        }
    }

    pub fn config(&self) -> &FabricConfig {
        &self.cfg
    }

    pub fn with_devices(mut self, devices: impl IntoIterator<Item = Device>) -> Self {
        self.devices.extend(devices);
        self
    }

    pub fn add_device(&mut self, d: Device) {
        self.devices.insert(d);
    }

    pub fn set_bar(&mut self, bar: GpuBarWindow) {
        self.bar = bar;
    }

    pub fn bar(&self) -> &GpuBarWindow {
        &self.bar
    }

    pub fn registers(&self, d: Device) -> Option<&MmioRegisterFile> {
        self.registers.get(&d)
    }

    pub fn registers_mut(&mut self, d: Device) -> &mut MmioRegisterFile {
        self.registers.entry(d).or_default()
    }

    pub fn route(&self, from: Device, to: Device) -> Result<Route> {
        if from == to || !self.devices.contains(&from) || !self.devices.contains(&to) {
            return Err(SimError::NoRoute {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        let link = if from == Device::Cpu || to == Device::Cpu {
            self.cfg.host.clone()
        } else {
            self.cfg.pcie.clone()
        };
        Ok(Route {
            path: vec![from, to],
            links: vec![link],
        })
    }

    fn one_way(&mut self, route: &Route) -> SimTime {
        route_time(&route.links, MMIO_BYTES, &mut self.rng)
    }

    fn check_target(&self, initiator: Device, target: Device, addr: u64) -> Result<()> {
        if target == Device::Gpu {
            if initiator != Device::Gpu {
                self.bar.check(addr, 8)?;
            }
            return Ok(());
        }
        self.registers
            .get(&target)
            .ok_or(SimError::UnmappedRegister(addr))?
            .check(addr)
    }

    /// Issues a posted write: the initiator continues immediately.
    pub fn mmio_write(
        &mut self,
        initiator: Device,
        target: Device,
        addr: u64,
        value: u64,
    ) -> Result<PostedWrite> {
        let route = self.route(initiator, target)?;
        self.check_target(initiator, target, addr)?;
        let delay = self.one_way(&route);
        let handler = self
            .registers
            .get(&target)
            .and_then(|r| r.doorbell_handler(addr));
        Ok(PostedWrite {
            initiator,
            target,
            addr,
            value,
            delay,
            handler,
        })
    }

    /// Latency of a small posted memory write (a queue entry, a flag) that
    /// targets memory rather than a register.
    pub fn posted_latency(&mut self, from: Device, to: Device) -> Result<SimTime> {
        let route = self.route(from, to)?;
        Ok(self.one_way(&route))
    }

    /// Lands a posted write at its target.
    pub fn deliver(&mut self, w: &PostedWrite) -> Result<Option<ComponentId>> {
        let regs = self.registers.entry(w.target).or_default();
        if w.target == Device::Gpu {
            regs.define(w.addr);
        }
        regs.write(w.addr, w.value)
    }

    /// Non-posted read: `(value, round-trip latency)`.
    pub fn mmio_read(
        &mut self,
        initiator: Device,
        target: Device,
        addr: u64,
    ) -> Result<(u64, SimTime)> {
        let route = self.route(initiator, target)?;
        self.check_target(initiator, target, addr)?;
        let rtt = self.one_way(&route) + self.one_way(&route);
        let value = self
            .registers
            .get(&target)
            .and_then(|r| r.read(addr).ok())
            .unwrap_or(0);
        Ok((value, rtt))
    }

    pub fn transfer(&self, src: BusAddr, dst: BusAddr, bytes: u64) -> Result<Transfer> {
        Ok(Transfer {
            src,
            dst,
            bytes,
            route: self.route(src.device, dst.device)?,
        })
    }

    /// Starts a DMA. The caller schedules completion `duration` later and
    /// then calls [`Fabric::complete_dma`].
    pub fn start_dma(&mut self, t: &Transfer) -> Result<DmaTicket> {
        if t.bytes == 0 {
            return Err(SimError::Precondition("zero-byte DMA transfer".into()));
        }
        if t.route.links.is_empty() {
            return Err(SimError::NoRoute {
                from: t.src.device.to_string(),
                to: t.dst.device.to_string(),
            });
        }
        for end in [t.src, t.dst] {
            let peer = if end == t.src { t.dst } else { t.src };
            if end.device == Device::Gpu && peer.device != Device::Gpu {
                self.bar.check(end.addr, t.bytes)?;
            }
        }
        let duration = route_time(&t.route.links, t.bytes, &mut self.rng);
        let id = TransferId(self.next_transfer);
        self.next_transfer += 1;
        self.inflight.insert(id, t.bytes);
        self.dma_started += 1;
        Ok(DmaTicket {
            id,
            duration,
            bytes: t.bytes,
        })
    }

    /// Convenience: route + start.
    pub fn dma(&mut self, src: BusAddr, dst: BusAddr, bytes: u64) -> Result<DmaTicket> {
        let t = self.transfer(src, dst, bytes)?;
        self.start_dma(&t)
    }

    pub fn complete_dma(&mut self, id: TransferId) -> Result<u64> {
        let bytes = self.inflight.remove(&id).ok_or_else(|| {
            SimError::Protocol(format!("DMA completion for unknown transfer {}", id.0))
        })?;
        self.bytes_moved += bytes;
        self.dma_completed += 1;
        Ok(bytes)
    }

    pub fn bytes_moved(&self) -> u64 {
        self.bytes_moved
    }

    pub fn dma_counts(&self) -> (u64, u64) {
        (self.dma_started, self.dma_completed)
    }

    pub fn dma_inflight(&self) -> usize {
        self.inflight.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Engine, Event, EventKind, Handler};

    fn quiet_cfg() -> FabricConfig {
        FabricConfig {
            pcie: LinkModel::new(850, 12_800).unwrap(),
            host: LinkModel::new(850, 12_800).unwrap(),
            ..FabricConfig::default()
        }
    }

    fn server(cfg: FabricConfig) -> Fabric {
        Fabric::new(cfg, 1, "fabric").with_devices([
            Device::Cpu,
            Device::Gpu,
            Device::Fpga,
            Device::Ssd(0),
        ])
    }

    #[derive(Debug)]
    struct Land(PostedWrite);
    impl EventKind for Land {
        fn kind(&self) -> &'static str {
            "mmio"
        }
    }

    struct World {
        fabric: Fabric,
        fired: Vec<(SimTime, ComponentId, u64)>,
    }
    impl Handler<Land> for World {
        fn handle(&mut self, e: &mut Engine<Land>, ev: Event<Land>) -> Result<()> {
            let h = self.fabric.deliver(&ev.payload.0)?;
            assert_eq!(h, Some(ev.target));
            self.fired.push((e.now(), ev.target, ev.payload.0.value));
            Ok(())
        }
    }

    #[test]
    fn gpu_doorbell_fires_after_one_way_latency() {
        let mut engine = Engine::new();
        let fpga_logic = engine.register("fpga-logic");
        let mut fabric = server(quiet_cfg());
        fabric
            .registers_mut(Device::Fpga)
            .define_doorbell(0x100, fpga_logic);
        let w = fabric
            .mmio_write(Device::Gpu, Device::Fpga, 0x100, 42)
            .unwrap();
        assert_eq!(w.delay, SimTime::ns(850));
        engine
            .schedule(w.delay, w.handler.unwrap(), Land(w))
            .unwrap();
        let mut world = World {
            fabric,
            fired: vec![],
        };
        engine.run(&mut world, SimTime::MAX).unwrap();
        assert_eq!(world.fired, vec![(SimTime::ns(850), fpga_logic, 42)]);
        let regs = world.fabric.registers(Device::Fpga).unwrap();
        assert_eq!(regs.read(0x100).unwrap(), 42);
        assert_eq!(regs.rings(0x100), 1);
    }

    #[test]
    fn read_back_after_write_and_reset_value() {
        let mut f = server(quiet_cfg());
        f.registers_mut(Device::Fpga).define(0x8);
        f.registers_mut(Device::Fpga).define(0x10);
        let w = f.mmio_write(Device::Cpu, Device::Fpga, 0x8, 5).unwrap();
        f.deliver(&w).unwrap();
        assert_eq!(f.mmio_read(Device::Cpu, Device::Fpga, 0x8).unwrap().0, 5);
        assert_eq!(f.mmio_read(Device::Cpu, Device::Fpga, 0x10).unwrap().0, 0);
    }

    #[test]
    fn read_is_two_one_way_trips() {
        let mut f = server(quiet_cfg());
        f.registers_mut(Device::Fpga).define(0x8);
        let (_, t) = f.mmio_read(Device::Gpu, Device::Fpga, 0x8).unwrap();
        assert_eq!(t, SimTime::ns(1_700));
        let w = f.mmio_write(Device::Gpu, Device::Fpga, 0x8, 1).unwrap();
        assert!(t >= w.delay * 2);
    }

    #[test]
    fn jittered_reads_stay_in_bounds() {
        let cfg = FabricConfig {
            pcie: LinkModel::new(850, 12_800)
                .unwrap()
                .with_jitter(Dist::uniform(0, 200).unwrap()),
            ..quiet_cfg()
        };
        let mut f = server(cfg);
        f.registers_mut(Device::Fpga).define(0x8);
        for _ in 0..10_000 {
            let (_, t) = f.mmio_read(Device::Gpu, Device::Fpga, 0x8).unwrap();
            assert!((1_700..=2_100).contains(&t.as_ns()), "{t}");
        }
    }

    #[test]
    fn unmapped_register_faults() {
        let mut f = server(quiet_cfg());
        f.registers_mut(Device::Fpga).define(0x8);
        let err = f.mmio_write(Device::Cpu, Device::Fpga, 0x9, 1).unwrap_err();
        assert_eq!(err, SimError::UnmappedRegister(0x9));
        assert!(f.mmio_read(Device::Cpu, Device::Fpga, 0x9).is_err());
    }

    #[test]
    fn bar_violation_on_small_bar() {
        let mut f = server(quiet_cfg());
        f.set_bar(GpuBarWindow::fully_mapped(
            GpuBarWindow::rtx8000().size_bytes(),
        ));
        let err = f
            .mmio_write(Device::Fpga, Device::Gpu, 230 * MIB, 1)
            .unwrap_err();
        assert!(matches!(err, SimError::BarViolation { .. }));
        let err = f
            .dma(
                BusAddr::new(Device::Fpga, 0),
                BusAddr::new(Device::Gpu, 230 * MIB),
                4096,
            )
            .unwrap_err();
        assert!(matches!(err, SimError::BarViolation { .. }));
        assert_eq!(f.dma_inflight(), 0);
        // the GPU touching its own memory is not a P2P access
        assert!(f.mmio_write(Device::Gpu, Device::Gpu, 0, 0).is_err()); // no self-route
    }

    #[test]
    fn dma_one_mib_fpga_to_gpu() {
        let cfg = FabricConfig {
            pcie: LinkModel::new(900, 12_800).unwrap(),
            ..quiet_cfg()
        };
        let mut f = server(cfg);
        let t = f
            .dma(
                BusAddr::new(Device::Fpga, 0),
                BusAddr::new(Device::Gpu, 0),
                MIB,
            )
            .unwrap();
        assert_eq!(t.duration, SimTime::ns(82_820));
        assert_eq!(f.bytes_moved(), 0);
        assert_eq!(f.complete_dma(t.id).unwrap(), MIB);
        assert_eq!(f.bytes_moved(), MIB);
        assert!(f.complete_dma(t.id).is_err());
    }

    #[test]
    fn zero_byte_dma_rejected() {
        let mut f = server(quiet_cfg());
        let err = f
            .dma(
                BusAddr::new(Device::Ssd(0), 0),
                BusAddr::new(Device::Fpga, 0),
                0,
            )
            .unwrap_err();
        assert_eq!(err.category(), "precondition");
    }

    #[test]
    fn ssd_to_fpga_route_bypasses_cpu() {
        let f = server(quiet_cfg());
        let r = f.route(Device::Ssd(0), Device::Fpga).unwrap();
        assert!(!r.touches(Device::Cpu));
        let r = f.route(Device::Ssd(0), Device::Gpu).unwrap();
        assert!(!r.touches(Device::Cpu));
        assert!(f.route(Device::Ssd(0), Device::Ssd(7)).is_err());
    }

    #[test]
    fn byte_conservation_over_many_transfers() {
        let mut f = server(quiet_cfg());
        let mut budget = 0;
        let mut tickets = vec![];
        for i in 1..=100u64 {
            let bytes = i * 512;
            budget += bytes;
            tickets.push(
                f.dma(
                    BusAddr::new(Device::Ssd(0), 0),
                    BusAddr::new(Device::Cpu, 0),
                    bytes,
                )
                .unwrap(),
            );
        }
        for t in tickets {
            f.complete_dma(t.id).unwrap();
        }
        assert_eq!(f.bytes_moved(), budget);
        assert_eq!(f.dma_counts(), (100, 100));
    }
}
