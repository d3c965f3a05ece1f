//! P4 switch: bounded pipeline, program admission and in-network
//! aggregation with broadcast.

mod aggregate;
mod program;

use std::collections::{BTreeMap, BTreeSet};

pub use aggregate::AggregationSession;
pub use program::{validate_program, AluOp, Rejection, SwitchLimits, SwitchProgram};

use crate::error::{Result, SimError};
use crate::fabric::{LinkModel, SerialLink};
use crate::sim::{Dist, RngStream, SimTime};

/// Allowed support of the pipeline latency distribution.
pub const PIPELINE_RANGE_NS: (u64, u64) = (1_000, 2_000);

#[derive(Debug, Clone, PartialEq)]
pub struct P4SwitchModel {
    pub num_ports: u32,
    pub port_bytes_per_us: u64,
    pub pipeline: Dist,
    pub num_stages: u32,
    pub sram_bytes: u64,
    pub allowed_ops: BTreeSet<AluOp>,
}

impl Default for P4SwitchModel {
    fn default() -> Self {
        P4SwitchModel {
            num_ports: 32,
            // 100 Gb/s
            port_bytes_per_us: 12_500,
            pipeline: Dist::Uniform {
                lo: 1_000,
                hi: 1_100,
            },
            num_stages: 12,
            sram_bytes: 22 << 20,
            allowed_ops: AluOp::switch_native(),
        }
    }
}

impl P4SwitchModel {
    pub fn validate(&self) -> Result<()> {
        if self.num_ports == 0 || self.port_bytes_per_us == 0 {
            return Err(SimError::Config(
                "switch needs ports with non-zero bandwidth".into(),
            ));
        }
        let (lo, hi) = self.pipeline.bounds();
        if lo < PIPELINE_RANGE_NS.0 || hi > PIPELINE_RANGE_NS.1 {
            return Err(SimError::ConfigKey {
                key: "switch.pipeline".into(),
                msg: format!(
                    "support [{lo}, {hi}] ns outside [{}, {}]",
                    PIPELINE_RANGE_NS.0, PIPELINE_RANGE_NS.1
                ),
            });
        }
        Ok(())
    }

    /// The switch as one network hop: pipeline latency plus egress
    /// serialisation, for flows that do not touch aggregation state.
    pub fn hop_link(&self) -> Result<LinkModel> {
        Ok(LinkModel::new(0, self.port_bytes_per_us)?.with_jitter(self.pipeline.clone()))
    }

    pub fn limits(&self) -> SwitchLimits {
        SwitchLimits {
            num_stages: self.num_stages,
            sram_bytes: self.sram_bytes,
            allowed_ops: self.allowed_ops.clone(),
        }
    }
}

/// One egress copy of a forwarded packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub port: u32,
    /// Time the last bit leaves the egress port.
    pub at: SimTime,
}

/// A switch instance with per-port egress queues and aggregation state.
#[derive(Debug, Clone)]
pub struct Switch {
    model: P4SwitchModel,
    rng: RngStream,
    egress: Vec<SerialLink>,
    sessions: BTreeMap<u32, AggregationSession>,
    programs: Vec<SwitchProgram>,
    sram_used: u64,
    traversals: u64,
}

impl Switch {
    pub fn new(model: P4SwitchModel, seed: u64, stream: &str) -> Result<Self> {
        model.validate()?;
        let port = LinkModel::new(0, model.port_bytes_per_us)?;
        Ok(Switch {
            egress: vec![SerialLink::new(port); model.num_ports as usize],
            rng: RngStream::new(seed, stream),
            model,
            sessions: BTreeMap::new(),
            programs: Vec::new(),
            sram_used: 0,
            traversals: 0,
        })
    }

    pub fn model(&self) -> &P4SwitchModel {
        &self.model
    }

    /// Installs a program if it fits the stage, op and remaining SRAM budget.
    pub fn install(&mut self, p: SwitchProgram) -> Result<(), Rejection> {
        let mut limits = self.model.limits();
        limits.sram_bytes -= self.sram_used;
        validate_program(&p, &limits)?;
        self.sram_used += p.state_bytes;
        self.programs.push(p);
        Ok(())
    }

    /// Opens an aggregation session, charging its slot registers to SRAM.
    pub fn open_session(&mut self, id: u32, num_workers: usize, num_slots: usize) -> Result<()> {
        if num_workers > self.model.num_ports as usize {
            return Err(SimError::Config(format!(
                "{num_workers} workers exceed {} switch ports",
                self.model.num_ports
            )));
        }
        if self.sessions.contains_key(&id) {
            return Err(SimError::Config(format!(
                "aggregation session {id} already open"
            )));
        }
        let s = AggregationSession::new(id, num_workers, num_slots)?;
        let program = SwitchProgram {
            // one stage for the add, one for the arrival bitmap
            stages_used: 2,
            ops_used: [AluOp::Add, AluOp::Bitwise].into(),
            state_bytes: s.state_bytes(),
        };
        self.install(program)
            .map_err(|r| SimError::Capacity(format!("aggregation session {id}: {r}")))?;
        self.sessions.insert(id, s);
        Ok(())
    }

    pub fn sram_used(&self) -> u64 {
        self.sram_used
    }

    pub fn session(&self, id: u32) -> Option<&AggregationSession> {
        self.sessions.get(&id)
    }

    pub fn contribute(
        &mut self,
        session: u32,
        worker: usize,
        values: &[u32],
    ) -> Result<Option<Vec<u32>>> {
        self.sessions
            .get_mut(&session)
            .ok_or_else(|| SimError::Protocol(format!("no aggregation session {session}")))?
            .contribute(worker, values)
    }

    /// Latency of one pipeline traversal.
    pub fn pipeline_sample(&mut self) -> SimTime {
        self.traversals += 1;
        self.model.pipeline.sample(&mut self.rng)
    }

    /// Forwards a packet that finished arriving at `now`: one pipeline pass,
    /// then serialisation on every egress port (multicast when several).
    pub fn forward(
        &mut self,
        now: SimTime,
        bytes: u64,
        in_port: u32,
        out_ports: &[u32],
    ) -> Result<Vec<Delivery>> {
        let n = self.model.num_ports;
        if let Some(p) = std::iter::once(&in_port)
            .chain(out_ports)
            .find(|&&p| p >= n)
        {
            return Err(SimError::Config(format!("switch port {p} outside 0..{n}")));
        }
        let ready = now + self.pipeline_sample();
        Ok(self.egress_at(ready, bytes, out_ports))
    }

    /// Egress serialisation of an already-processed packet (e.g. an
    /// aggregation result leaving the pipeline at `ready`).
    pub fn egress_at(&mut self, ready: SimTime, bytes: u64, out_ports: &[u32]) -> Vec<Delivery> {
        out_ports
            .iter()
            .map(|&port| Delivery {
                port,
                at: self.egress[port as usize].transmit(ready, bytes, &mut self.rng),
            })
            .collect()
    }

    pub fn traversals(&self) -> u64 {
        self.traversals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(pipeline: u64) -> Switch {
        let model = P4SwitchModel {
            pipeline: Dist::Constant(pipeline),
            ..P4SwitchModel::default()
        };
        Switch::new(model, 0, "switch").unwrap()
    }

    #[test]
    fn unicast_hand_calc() {
        let mut s = fixed(1500);
        let d = s.forward(SimTime::ZERO, 256, 0, &[1]).unwrap();
        assert_eq!(
            d,
            vec![Delivery {
                port: 1,
                at: SimTime::ns(1521)
            }]
        );
        assert_eq!(s.traversals(), 1);
    }

    #[test]
    fn broadcast_is_symmetric() {
        let mut s = fixed(1500);
        let ports: Vec<u32> = (0..8).collect();
        let d = s.forward(SimTime::ZERO, 1088, 0, &ports).unwrap();
        assert_eq!(d.len(), 8);
        assert!(d.iter().all(|x| x.at == d[0].at));
        assert_eq!(s.traversals(), 1);
    }

    #[test]
    fn bad_port() {
        let mut s = fixed(1500);
        assert!(s.forward(SimTime::ZERO, 64, 0, &[32]).is_err());
        assert!(s.forward(SimTime::ZERO, 64, 40, &[1]).is_err());
    }

    #[test]
    fn pipeline_support() {
        let model = P4SwitchModel {
            pipeline: Dist::uniform(1000, 2000).unwrap(),
            ..P4SwitchModel::default()
        };
        let mut s = Switch::new(model, 3, "switch").unwrap();
        for _ in 0..10_000 {
            let t = s.pipeline_sample().as_ns();
            assert!((1000..=2000).contains(&t));
        }
        let bad = P4SwitchModel {
            pipeline: Dist::Constant(500),
            ..P4SwitchModel::default()
        };
        assert!(Switch::new(bad, 0, "s").is_err());
    }

    #[test]
    fn egress_port_rate_limits() {
        let mut s = fixed(1000);
        // 12500 bytes take 1000 ns at 100 Gb/s; back-to-back packets queue
        let a = s.forward(SimTime::ZERO, 12_500, 0, &[2]).unwrap()[0].at;
        let b = s.forward(SimTime::ZERO, 12_500, 1, &[2]).unwrap()[0].at;
        assert_eq!(a, SimTime::ns(2000));
        assert_eq!(b, SimTime::ns(3000));
    }

    #[test]
    fn sessions_charge_sram() {
        let model = P4SwitchModel {
            sram_bytes: 2048,
            ..P4SwitchModel::default()
        };
        let mut s = Switch::new(model, 0, "s").unwrap();
        s.open_session(0, 8, 256).unwrap();
        s.open_session(1, 8, 256).unwrap();
        assert_eq!(s.sram_used(), 2048);
        let err = s.open_session(2, 8, 1).unwrap_err();
        assert_eq!(err.category(), "capacity");
        assert!(s.open_session(0, 8, 1).is_err());
    }
}
