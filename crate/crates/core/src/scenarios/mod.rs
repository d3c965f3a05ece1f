//! End-to-end experiments assembled from the component models.

mod gpu_offload;
mod inaggr;
mod interference;
mod middletier;
mod ssd_cores;

use std::fmt;
use std::str::FromStr;

pub use gpu_offload::{net_path, run_gpu_offload};
pub use inaggr::run_inaggr;
pub use interference::{interfered_gemm_ns, run_case, run_interference, Case, CaseResult};
pub use middletier::{run_middletier, run_tier_job, TierMode, TierParams, TierResult};
pub use ssd_cores::{run_ssd_cores, run_ssd_job, SsdJob, SsdJobResult};

use crate::config::{ConfigTree, SimConfig};
use crate::error::{Result, SimError};
use crate::report::Table;
use crate::sim::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ScenarioId {
    GpuOffload,
    Inaggr,
    SsdCores,
    Middletier,
    Interference,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::GpuOffload,
        ScenarioId::Inaggr,
        ScenarioId::SsdCores,
        ScenarioId::Middletier,
        ScenarioId::Interference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::GpuOffload => "gpu_offload",
            ScenarioId::Inaggr => "inaggr",
            ScenarioId::SsdCores => "ssd_cores",
            ScenarioId::Middletier => "middletier",
            ScenarioId::Interference => "interference",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ScenarioId::GpuOffload => {
                "inter-GPU latency with and without control-plane offload; local read paths"
            }
            ScenarioId::Inaggr => "switch aggregation rounds over FPGA or host transport",
            ScenarioId::SsdCores => "NVMe IOPS vs control-plane cores, plus the FPGA control plane",
            ScenarioId::Middletier => "storage middle tier throughput and latency vs cores",
            ScenarioId::Interference => {
                "GEMM slowdown from on-GPU collectives vs FPGA-offloaded collectives"
            }
        }
    }

    /// Values accepted by `--mode`; empty when the scenario has none.
    pub fn modes(self) -> &'static [&'static str] {
        match self {
            ScenarioId::GpuOffload => &["both", "with", "without"],
            ScenarioId::Inaggr => &["both", "fpga", "cpu"],
            ScenarioId::SsdCores => &["both", "read", "write"],
            ScenarioId::Middletier => &["both", "cpu_only", "cpu_fpga"],
            ScenarioId::Interference => &[],
        }
    }

    /// Config key that `--sweep` targets when given a bare name.
    pub fn sweep_key(self, name: &str) -> String {
        if name.contains('.') {
            name.to_string()
        } else {
            format!("{}.{name}", self.name())
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown scenario `{s}`")))
    }
}

/// What one scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub table: Table,
    pub metrics: Metrics,
    /// Event trace of every engine the run used, in job order.
    pub trace: Option<String>,
    /// Headline figures for the terminal summary.
    pub notes: Vec<String>,
}

/// Settings shared by every scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Common {
    pub num_servers: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Common {
    pub fn from_tree(t: &ConfigTree) -> Self {
        Common {
            num_servers: t.uint("scenario.num_servers") as usize,
            repetitions: t.uint("scenario.repetitions") as usize,
            warmup: t.uint("scenario.warmup") as usize,
            seed: t.uint("scenario.seed"),
        }
    }
}

/// Drops the first `warmup` samples of every latency label.
pub(crate) fn drop_warmup(m: &mut Metrics, warmup: usize) {
    for v in m.latencies.values_mut() {
        v.drain(..warmup.min(v.len()));
    }
}

pub(crate) fn append_trace(out: &mut Option<String>, job: &str, text: String) {
    if let Some(t) = out.as_mut() {
        t.push_str(&format!("# {job}\n"));
        t.push_str(&text);
    }
}

pub fn run(id: ScenarioId, cfg: &SimConfig, trace: bool) -> Result<ScenarioOutput> {
    match id {
        ScenarioId::GpuOffload => run_gpu_offload(cfg, trace),
        ScenarioId::Inaggr => run_inaggr(cfg, trace),
        ScenarioId::SsdCores => run_ssd_cores(cfg, trace),
        ScenarioId::Middletier => run_middletier(cfg, trace),
        ScenarioId::Interference => run_interference(cfg, trace),
    }
}
