use rayon::prelude::*;

use super::{append_trace, Common, ScenarioOutput};
use crate::config::SimConfig;
use crate::error::Result;
use crate::nvme::{DriverKind, NvmeSystem, Opcode, Workload};
use crate::report::{num, Table};
use crate::sim::{Engine, Metrics, SimTime};

/// One closed-loop saturation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SsdJob {
    pub op: Opcode,
    pub driver: DriverKind,
    pub cores: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsdJobResult {
    pub job: SsdJob,
    pub iops: f64,
    pub capacity: u64,
    pub core_util: Vec<f64>,
    pub retired: u64,
    pub trace: String,
}

impl SsdJobResult {
    pub fn fraction(&self) -> f64 {
        self.iops / self.capacity as f64
    }

    pub fn mean_util(&self) -> f64 {
        if self.core_util.is_empty() {
            0.0
        } else {
            self.core_util.iter().sum::<f64>() / self.core_util.len() as f64
        }
    }
}

pub fn run_ssd_job(cfg: &SimConfig, seed: u64, job: &SsdJob, trace: bool) -> Result<SsdJobResult> {
    let t = &cfg.tree;
    let workload = Workload {
        read_fraction: if job.op == Opcode::Read { 1.0 } else { 0.0 },
        nblocks: (
            t.uint("nvme.nblocks_min") as u32,
            t.uint("nvme.nblocks_max") as u32,
        ),
        outstanding_per_ssd: t.uint("nvme.outstanding_per_ssd") as usize,
        total_commands: None,
        ..Workload::default()
    };
    let warmup = SimTime::us(t.uint("ssd_cores.warmup_us"));
    let window = SimTime::us(t.uint("ssd_cores.window_us"));
    let end = warmup + window;
    let mut engine = Engine::new();
    if trace {
        engine.enable_trace();
    }
    let mut sys = NvmeSystem::new(
        &mut engine,
        cfg.nvme.clone(),
        cfg.fabric.clone(),
        job.driver,
        job.cores,
        workload,
        seed,
    )?;
    sys.start(&mut engine, Some(warmup))?;
    sys.run(&mut engine, end)?;
    let (r, w) = sys.retired_in_window();
    Ok(SsdJobResult {
        iops: (r + w) as f64 * 1e9 / window.as_ns() as f64,
        capacity: cfg.nvme.aggregate_iops(job.op),
        core_util: sys.core_utilization(end),
        retired: r + w,
        trace: engine.trace_text(),
        job: job.clone(),
    })
}

/// IOPS against control-plane core count for each direction, plus one run
/// with the FPGA driving the queues.
pub fn run_ssd_cores(cfg: &SimConfig, trace: bool) -> Result<ScenarioOutput> {
    let t = &cfg.tree;
    let common = Common::from_tree(t);
    let mode = t.string("ssd_cores.mode");
    let cores = t.int_list("ssd_cores.cores");
    let mut jobs = Vec::new();
    for op in [Opcode::Read, Opcode::Write] {
        if mode != "both" && mode != op.to_string() {
            continue;
        }
        for &c in &cores {
            jobs.push(SsdJob {
                op,
                driver: DriverKind::Cpu,
                cores: c as usize,
            });
        }
        jobs.push(SsdJob {
            op,
            driver: DriverKind::Fpga,
            cores: 0,
        });
    }
    let results: Vec<SsdJobResult> = jobs
        .par_iter()
        .map(|j| run_ssd_job(cfg, common.seed, j, trace))
        .collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "op",
        "driver",
        "cores",
        "iops",
        "capacity_iops",
        "fraction",
        "cpu_util",
        "retired",
    ]);
    let mut metrics = Metrics::new();
    let mut trace_out = trace.then(String::new);
    let mut notes = Vec::new();
    for r in results {
        let j = &r.job;
        let label = format!("{}/{}", j.op, j.driver);
        table.push(vec![
            j.op.to_string(),
            j.driver.to_string(),
            j.cores.to_string(),
            num(r.iops),
            r.capacity.to_string(),
            num(r.fraction()),
            num(r.mean_util()),
            r.retired.to_string(),
        ]);
        metrics.push_point(&format!("iops/{label}"), j.cores as f64, r.iops);
        metrics.add(&format!("completions/{label}"), r.retired);
        for (i, u) in r.core_util.iter().enumerate() {
            metrics.set_utilization(&format!("{label}/{}c/core{i}", j.cores), *u);
        }
        if j.driver == DriverKind::Fpga {
            notes.push(format!(
                "{} fpga control plane: {} of capacity",
                j.op,
                num(r.fraction())
            ));
        }
        append_trace(&mut trace_out, &format!("{label}/{}", j.cores), r.trace);
    }
    Ok(ScenarioOutput {
        table,
        metrics,
        trace: trace_out,
        notes,
    })
}
