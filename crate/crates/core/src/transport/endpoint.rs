use std::fmt;
use std::str::FromStr;

use crate::devices::Core;
use crate::error::{Result, SimError};
use crate::sim::{Dist, RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointKind {
    /// Software stack on host cores.
    Cpu,
    /// Hardware transport pipeline.
    Fpga,
}

impl fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndpointKind::Cpu => "cpu",
            EndpointKind::Fpga => "fpga",
        })
    }
}

impl FromStr for EndpointKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu" => Ok(EndpointKind::Cpu),
            "fpga" => Ok(EndpointKind::Fpga),
            _ => Err(SimError::Config(format!("unknown endpoint kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointModel {
    pub kind: EndpointKind,
    pub tx: Dist,
    pub rx: Dist,
    /// Cores serving a CPU endpoint; ignored for FPGA endpoints.
    pub cores: usize,
}

impl EndpointModel {
    pub fn fpga(tx: Dist, rx: Dist) -> Self {
        EndpointModel {
            kind: EndpointKind::Fpga,
            tx,
            rx,
            cores: 0,
        }
    }

    pub fn cpu(tx: Dist, rx: Dist, cores: usize) -> Self {
        EndpointModel {
            kind: EndpointKind::Cpu,
            tx,
            rx,
            cores,
        }
    }

    pub fn cost(&self, dir: Direction) -> &Dist {
        match dir {
            Direction::Tx => &self.tx,
            Direction::Rx => &self.rx,
        }
    }
}

/// A transport endpoint: per-packet processing, serialised on host cores
/// for the CPU kind and fully pipelined for the FPGA kind.
#[derive(Debug, Clone)]
pub struct Endpoint {
    pub model: EndpointModel,
    cores: Vec<Core>,
    rng: RngStream,
}

impl Endpoint {
    pub fn new(model: EndpointModel, seed: u64, stream: &str) -> Result<Self> {
        let cores = match model.kind {
            EndpointKind::Cpu if model.cores == 0 => {
                return Err(SimError::Config(format!(
                    "endpoint `{stream}`: cpu endpoint needs at least one core"
                )))
            }
            EndpointKind::Cpu => vec![Core::new(); model.cores],
            EndpointKind::Fpga => Vec::new(),
        };
        Ok(Endpoint {
            model,
            cores,
            rng: RngStream::new(seed, stream),
        })
    }

    pub fn kind(&self) -> EndpointKind {
        self.model.kind
    }

    /// Processes one packet that became ready at `now`; returns when it is
    /// done. CPU endpoints queue behind earlier work on the chosen core.
    pub fn process(&mut self, dir: Direction, now: SimTime) -> SimTime {
        let work = self.model.cost(dir).sample(&mut self.rng);
        match self.model.kind {
            EndpointKind::Fpga => now + work,
            EndpointKind::Cpu => {
                let core = (0..self.cores.len())
                    .min_by_key(|&i| (self.cores[i].free_at(), i))
                    .expect("cpu endpoint has cores");
                self.cores[core].execute(now, work)
            }
        }
    }

    /// Total core time charged; always zero for FPGA endpoints.
    pub fn core_busy(&self) -> SimTime {
        self.cores.iter().map(Core::total_busy).sum()
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }
}
