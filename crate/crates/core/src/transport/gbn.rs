use std::collections::{BTreeMap, VecDeque};

use super::endpoint::{Direction, Endpoint};
use super::message::{split, Message, Packet, Reassembler};
use crate::error::{Result, SimError};
use crate::fabric::{LinkModel, SerialLink};
use crate::sim::{EventId, RngStream, Scheduler, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct GbnConfig {
    pub mtu: u64,
    pub window: usize,
    pub rto_init: SimTime,
    /// Independent per-packet drop probability, data and acks alike.
    pub loss: f64,
    /// Wire overhead added to every data packet.
    pub header_bytes: u64,
    pub ack_bytes: u64,
}

impl Default for GbnConfig {
    fn default() -> Self {
        GbnConfig {
            mtu: 4096,
            window: 64,
            rto_init: SimTime::us(20),
            loss: 0.0,
            header_bytes: 0,
            ack_bytes: 64,
        }
    }
}

impl GbnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(SimError::Config("transport window must be >= 1".into()));
        }
        if self.mtu == 0 {
            return Err(SimError::Config("transport mtu must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.loss) {
            return Err(SimError::Config(format!(
                "loss probability {} not in [0, 1)",
                self.loss
            )));
        }
        if self.rto_init == SimTime::ZERO {
            return Err(SimError::Config("rto must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbnEvent {
    /// Data packet reached the receiver's network port.
    DataWire(Packet),
    /// Receiver finished per-packet processing.
    DataDone(Packet),
    /// Cumulative ack (next expected seq) reached the sender.
    AckWire(u64),
    AckDone(u64),
    Timeout,
}

impl GbnEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            GbnEvent::DataWire(_) => "gbn-data-wire",
            GbnEvent::DataDone(_) => "gbn-data",
            GbnEvent::AckWire(_) => "gbn-ack-wire",
            GbnEvent::AckDone(_) => "gbn-ack",
            GbnEvent::Timeout => "gbn-timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivered {
    pub msg: Message,
    pub sent: SimTime,
    pub at: SimTime,
    /// Length and digest match what the sender submitted.
    pub intact: bool,
}

impl Delivered {
    pub fn latency(&self) -> SimTime {
        self.at - self.sent
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GbnStats {
    pub data_tx: u64,
    pub retx: u64,
    pub acks_tx: u64,
    pub drops: u64,
    pub timeouts: u64,
    pub payload_sent: u64,
    pub payload_delivered: u64,
}

#[derive(Debug, Clone)]
struct InFlight {
    pkt: Packet,
    sent_at: SimTime,
    retransmitted: bool,
}

/// One-directional reliable message flow using go-back-N with cumulative
/// acks and a single retransmission timer.
#[derive(Debug, Clone)]
pub struct GbnChannel {
    pub flow_id: u32,
    cfg: GbnConfig,
    sender: Endpoint,
    receiver: Endpoint,
    fwd: Vec<SerialLink>,
    rev: Vec<SerialLink>,
    rng: RngStream,

    unsent: VecDeque<Packet>,
    window: VecDeque<InFlight>,
    base: u64,
    next_seq: u64,
    timer: Option<EventId>,
    srtt: Option<f64>,
    rto: SimTime,
    submitted: BTreeMap<u64, (Message, SimTime)>,
    next_msg: u64,

    expected: u64,
    reasm: Reassembler,
    delivered: Vec<Delivered>,
    stats: GbnStats,
}

impl GbnChannel {
    /// `path` lists the network hops from sender to receiver; acks take the
    /// same hops in reverse.
    pub fn new(
        flow_id: u32,
        cfg: GbnConfig,
        sender: Endpoint,
        receiver: Endpoint,
        path: &[LinkModel],
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if path.is_empty() {
            return Err(SimError::Config(format!(
                "flow {flow_id}: destination unreachable (empty path)"
            )));
        }
        let fwd = path.iter().cloned().map(SerialLink::new).collect();
        let rev = path.iter().rev().cloned().map(SerialLink::new).collect();
        Ok(GbnChannel {
            flow_id,
            rto: cfg.rto_init,
            cfg,
            sender,
            receiver,
            fwd,
            rev,
            rng: RngStream::new(seed, format!("gbn/{flow_id}")),
            unsent: VecDeque::new(),
            window: VecDeque::new(),
            base: 0,
            next_seq: 0,
            timer: None,
            srtt: None,
            submitted: BTreeMap::new(),
            next_msg: 0,
            expected: 0,
            reasm: Reassembler::new(),
            delivered: Vec::new(),
            stats: GbnStats::default(),
        })
    }

    pub fn config(&self) -> &GbnConfig {
        &self.cfg
    }

    /// Queues a synthetic message of `len` bytes; returns its sequence number.
    pub fn send<S: Scheduler<GbnEvent>>(&mut self, s: &mut S, len: u64) -> Result<u64> {
        let msg = Message::synthetic(self.flow_id, self.next_msg, len)?;
        self.next_msg += 1;
        self.submitted.insert(msg.msg_seq, (msg, s.now()));
        self.stats.payload_sent += len;
        self.unsent.extend(split(&msg, self.cfg.mtu)?);
        self.pump(s);
        Ok(msg.msg_seq)
    }

    /// Handles one channel event; returns a message if this event completed it.
    pub fn handle<S: Scheduler<GbnEvent>>(
        &mut self,
        s: &mut S,
        ev: GbnEvent,
    ) -> Result<Option<Delivered>> {
        let now = s.now();
        match ev {
            GbnEvent::DataWire(p) => {
                let done = self.receiver.process(Direction::Rx, now);
                s.schedule(done - now, GbnEvent::DataDone(p));
            }
            GbnEvent::DataDone(p) => {
                let mut out = None;
                if p.seq == self.expected {
                    self.expected += 1;
                    if let Some(m) = self.reasm.push(p) {
                        out = Some(self.deliver(m, now)?);
                    }
                }
                self.send_ack(s);
                return Ok(out);
            }
            GbnEvent::AckWire(n) => {
                let done = self.sender.process(Direction::Rx, now);
                s.schedule(done - now, GbnEvent::AckDone(n));
            }
            GbnEvent::AckDone(n) => self.on_ack(s, n),
            GbnEvent::Timeout => {
                self.timer = None;
                if !self.window.is_empty() {
                    self.stats.timeouts += 1;
                    for f in self.window.iter_mut() {
                        f.retransmitted = true;
                        f.sent_at = now;
                    }
                    let pkts: Vec<Packet> = self.window.iter().map(|f| f.pkt).collect();
                    for p in pkts {
                        self.stats.retx += 1;
                        self.transmit(s, p);
                    }
                    self.arm_timer(s);
                }
            }
        }
        Ok(None)
    }

    fn deliver(&mut self, m: Message, now: SimTime) -> Result<Delivered> {
        let (orig, sent) = self.submitted.remove(&m.msg_seq).ok_or_else(|| {
            SimError::Protocol(format!(
                "flow {}: delivery of unknown message {}",
                self.flow_id, m.msg_seq
            ))
        })?;
        let d = Delivered {
            msg: m,
            sent,
            at: now,
            intact: orig == m,
        };
        self.stats.payload_delivered += m.length_bytes;
        self.delivered.push(d);
        Ok(d)
    }

    fn wire_time(
        links: &mut [SerialLink],
        depart: SimTime,
        bytes: u64,
        rng: &mut RngStream,
    ) -> SimTime {
        links
            .iter_mut()
            .fold(depart, |t, l| l.transmit(t, bytes, rng))
    }

    fn transmit<S: Scheduler<GbnEvent>>(&mut self, s: &mut S, p: Packet) {
        let now = s.now();
        self.stats.data_tx += 1;
        let depart = self.sender.process(Direction::Tx, now);
        let bytes = p.payload_bytes + self.cfg.header_bytes;
        let arrive = Self::wire_time(&mut self.fwd, depart, bytes, &mut self.rng);
        if self.rng.bernoulli(self.cfg.loss) {
            self.stats.drops += 1;
        } else {
            s.schedule(arrive - now, GbnEvent::DataWire(p));
        }
    }

    fn send_ack<S: Scheduler<GbnEvent>>(&mut self, s: &mut S) {
        let now = s.now();
        self.stats.acks_tx += 1;
        let depart = self.receiver.process(Direction::Tx, now);
        let arrive = Self::wire_time(&mut self.rev, depart, self.cfg.ack_bytes, &mut self.rng);
        if self.rng.bernoulli(self.cfg.loss) {
            self.stats.drops += 1;
        } else {
            s.schedule(arrive - now, GbnEvent::AckWire(self.expected));
        }
    }

    fn on_ack<S: Scheduler<GbnEvent>>(&mut self, s: &mut S, next: u64) {
        if next <= self.base {
            return;
        }
        let now = s.now();
        let mut sample = None;
        while self.window.front().is_some_and(|f| f.pkt.seq < next) {
            let f = self.window.pop_front().expect("front exists");
            sample = (!f.retransmitted).then(|| (now - f.sent_at).as_ns() as f64);
        }
        self.base = next;
        if let Some(rtt) = sample {
            let srtt = match self.srtt {
                Some(old) => 0.875 * old + 0.125 * rtt,
                None => rtt,
            };
            self.srtt = Some(srtt);
            self.rto = SimTime::from_ns_f64_ceil(3.0 * srtt).max(SimTime::us(1));
        }
        if self.window.is_empty() {
            if let Some(t) = self.timer.take() {
                s.cancel(t);
            }
        } else {
            self.arm_timer(s);
        }
        self.pump(s);
    }

    fn arm_timer<S: Scheduler<GbnEvent>>(&mut self, s: &mut S) {
        if let Some(t) = self.timer.take() {
            s.cancel(t);
        }
        self.timer = Some(s.schedule(self.rto, GbnEvent::Timeout));
    }

    fn pump<S: Scheduler<GbnEvent>>(&mut self, s: &mut S) {
        while self.window.len() < self.cfg.window {
            let Some(mut p) = self.unsent.pop_front() else {
                break;
            };
            p.seq = self.next_seq;
            self.next_seq += 1;
            self.window.push_back(InFlight {
                pkt: p,
                sent_at: s.now(),
                retransmitted: false,
            });
            self.transmit(s, p);
            if self.timer.is_none() {
                self.arm_timer(s);
            }
        }
    }

    pub fn delivered(&self) -> &[Delivered] {
        &self.delivered
    }

    pub fn stats(&self) -> GbnStats {
        self.stats
    }

    /// Nothing queued, in flight or awaiting an ack.
    pub fn is_idle(&self) -> bool {
        self.unsent.is_empty() && self.window.is_empty()
    }

    pub fn sender(&self) -> &Endpoint {
        &self.sender
    }

    pub fn receiver(&self) -> &Endpoint {
        &self.receiver
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Dist, Engine, Event, EventKind, Handler};
    use crate::transport::EndpointModel;

    #[derive(Debug)]
    struct Ev(GbnEvent);
    impl EventKind for Ev {
        fn kind(&self) -> &'static str {
            self.0.kind()
        }
    }

    struct World(GbnChannel);
    impl Handler<Ev> for World {
        fn handle(&mut self, e: &mut Engine<Ev>, ev: Event<Ev>) -> Result<()> {
            self.0.handle(&mut e.ctx(ev.target, Ev), ev.payload.0)?;
            Ok(())
        }
    }

    fn channel(cfg: GbnConfig, cost: u64, hop: LinkModel) -> GbnChannel {
        let m = EndpointModel::fpga(Dist::Constant(cost), Dist::Constant(cost));
        GbnChannel::new(
            0,
            cfg,
            Endpoint::new(m.clone(), 1, "tx").unwrap(),
            Endpoint::new(m, 1, "rx").unwrap(),
            &[hop],
            1,
        )
        .unwrap()
    }

    #[test]
    fn lossless_single_packet() {
        let mut e = Engine::new();
        let id = e.register("flow0");
        let hop = LinkModel::new(500, 12_500).unwrap();
        let mut w = World(channel(GbnConfig::default(), 0, hop));
        w.0.send(&mut e.ctx(id, Ev), 1000).unwrap();
        e.run(&mut w, SimTime::MAX).unwrap();
        let d = w.0.delivered();
        assert_eq!(d.len(), 1);
        // 500 + ceil(1000 * 1000 / 12500) = 580; the ack trails it
        assert_eq!(d[0].latency(), SimTime::ns(580));
        assert!(d[0].intact);
        assert!(w.0.is_idle());
        assert_eq!(w.0.stats().retx, 0);
    }

    #[test]
    fn rejects_bad_setup() {
        let m = EndpointModel::fpga(Dist::ZERO, Dist::ZERO);
        let ep = || Endpoint::new(m.clone(), 0, "x").unwrap();
        assert!(GbnChannel::new(0, GbnConfig::default(), ep(), ep(), &[], 0).is_err());
        let cfg = GbnConfig {
            window: 0,
            ..GbnConfig::default()
        };
        let hop = LinkModel::new(1, 1).unwrap();
        assert!(GbnChannel::new(0, cfg, ep(), ep(), &[hop], 0).is_err());
    }

    #[test]
    fn lossy_exactly_once_in_order() {
        let mut e = Engine::new();
        let id = e.register("flow0");
        let cfg = GbnConfig {
            loss: 0.05,
            window: 16,
            ..GbnConfig::default()
        };
        let hop = LinkModel::new(500, 12_500).unwrap();
        let mut w = World(channel(cfg, 300, hop));
        for _ in 0..100 {
            w.0.send(&mut e.ctx(id, Ev), 4 * 4096).unwrap();
        }
        e.run(&mut w, SimTime::MAX).unwrap();
        let d = w.0.delivered();
        assert_eq!(d.len(), 100);
        assert!(d
            .iter()
            .enumerate()
            .all(|(i, x)| x.msg.msg_seq == i as u64 && x.intact));
        assert!(w.0.stats().retx > 0);
        assert_eq!(w.0.stats().payload_delivered, w.0.stats().payload_sent);
        assert_eq!(e.pending(), 0);
    }
}
