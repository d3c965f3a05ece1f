use crate::error::{Result, SimError};
use crate::sim::{serialization_ns, Dist, RngStream, SimTime};

/// Linear latency/bandwidth cost model of one PCIe or network traversal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub base_latency: SimTime,
    pub bandwidth_bytes_per_us: u64,
    pub jitter: Dist,
    /// Only meaningful for network links.
    pub mtu_bytes: u64,
}

impl LinkModel {
    pub fn new(base_latency_ns: u64, bandwidth_bytes_per_us: u64) -> Result<Self> {
        if bandwidth_bytes_per_us == 0 {
            return Err(SimError::Config("link bandwidth must be > 0".into()));
        }
        Ok(LinkModel {
            base_latency: SimTime::ns(base_latency_ns),
            bandwidth_bytes_per_us,
            jitter: Dist::ZERO,
            mtu_bytes: 4096,
        })
    }

    pub fn with_jitter(mut self, jitter: Dist) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_mtu(mut self, mtu: u64) -> Self {
        self.mtu_bytes = mtu;
        self
    }

    pub fn serialization(&self, bytes: u64) -> SimTime {
        serialization_ns(bytes, self.bandwidth_bytes_per_us)
    }

    /// Base latency plus serialisation, without jitter.
    pub fn nominal_time(&self, bytes: u64) -> SimTime {
        self.base_latency + self.serialization(bytes)
    }

    pub fn traversal_time(&self, bytes: u64, rng: &mut RngStream) -> SimTime {
        self.nominal_time(bytes) + self.jitter.sample(rng)
    }
}

/// Sum of per-hop traversal times (store-and-forward).
pub fn route_time(route: &[LinkModel], bytes: u64, rng: &mut RngStream) -> SimTime {
    route.iter().map(|l| l.traversal_time(bytes, rng)).sum()
}

/// A link with FIFO transmit state: transmissions serialise on the wire and
/// arrivals never overtake each other.
#[derive(Debug, Clone)]
pub struct SerialLink {
    pub model: LinkModel,
    free_at: SimTime,
    last_arrival: SimTime,
    busy: SimTime,
    bytes: u64,
}

impl SerialLink {
    pub fn new(model: LinkModel) -> Self {
        SerialLink {
            model,
            free_at: SimTime::ZERO,
            last_arrival: SimTime::ZERO,
            busy: SimTime::ZERO,
            bytes: 0,
        }
    }

    /// Enqueues `bytes` for transmission at `ready`; returns arrival time at
    /// the far end.
    pub fn transmit(&mut self, ready: SimTime, bytes: u64, rng: &mut RngStream) -> SimTime {
        let start = ready.max(self.free_at);
        let ser = self.model.serialization(bytes);
        self.free_at = start + ser;
        self.busy += ser;
        self.bytes += bytes;
        let arrival = self.free_at + self.model.base_latency + self.model.jitter.sample(rng);
        self.last_arrival = arrival.max(self.last_arrival);
        self.last_arrival
    }

    pub fn free_at(&self) -> SimTime {
        self.free_at
    }

    pub fn busy_time(&self) -> SimTime {
        self.busy
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RngStream {
        RngStream::new(0, "link-test")
    }

    #[test]
    fn zero_payload_is_base_latency() {
        let l = LinkModel::new(700, 12_800).unwrap();
        assert_eq!(l.traversal_time(0, &mut rng()), SimTime::ns(700));
    }

    #[test]
    fn base_plus_serialisation() {
        let l = LinkModel::new(900, 12_800).unwrap();
        assert_eq!(l.traversal_time(65_536, &mut rng()), SimTime::ns(6_020));
    }

    #[test]
    fn two_hop_route() {
        let hop = LinkModel::new(500, 12_500).unwrap();
        let t = route_time(&[hop.clone(), hop], 4_096, &mut rng());
        assert_eq!(t, SimTime::ns(1_656));
    }

    #[test]
    fn zero_bandwidth_rejected() {
        assert!(LinkModel::new(1, 0).is_err());
    }

    #[test]
    fn serial_link_queues_back_to_back() {
        let mut s = SerialLink::new(LinkModel::new(100, 1_000).unwrap());
        let mut r = rng();
        // 1000 bytes at 1000 B/us = 1000 ns on the wire
        assert_eq!(s.transmit(SimTime::ZERO, 1_000, &mut r), SimTime::ns(1_100));
        assert_eq!(s.transmit(SimTime::ZERO, 1_000, &mut r), SimTime::ns(2_100));
        assert_eq!(
            s.transmit(SimTime::ns(5_000), 0, &mut r),
            SimTime::ns(5_100)
        );
        assert_eq!(s.busy_time(), SimTime::ns(2_000));
    }

    #[test]
    fn serial_link_preserves_order_under_jitter() {
        let model = LinkModel::new(10, 100_000)
            .unwrap()
            .with_jitter(Dist::uniform(0, 5_000).unwrap());
        let mut s = SerialLink::new(model);
        let mut r = rng();
        let mut last = SimTime::ZERO;
        for i in 0..1_000 {
            let a = s.transmit(SimTime::ns(i * 10), 64, &mut r);
            assert!(a >= last);
            last = a;
        }
    }
}
