//! `[section]` + `key = value` configuration with a fixed key schema.
//!
//! Files use the TOML subset of tables, integers, floats, booleans, quoted
//! strings and flat arrays. Distributions are quoted strings such as
//! `"uniform(0,40)"` or `"lognormal_mean(5000,0.25,20000)"`. Every key has a
//! default; unknown keys are rejected. A `[run]` table (as written into run
//! manifests) is accepted and ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use toml::Value;

use crate::devices::{CpuCosts, GpuModel};
use crate::error::{Result, SimError};
use crate::fabric::{FabricConfig, LinkModel};
use crate::nvme::{NvmeConfig, SsdModel};
use crate::sim::{Dist, SimTime};
use crate::switch::{AluOp, P4SwitchModel};
use crate::transport::GbnConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int { min: i64, max: i64 },
    Float { min: f64, max: f64 },
    Bool,
    Choice(&'static [&'static str]),
    Dist,
    IntList { min: i64, max: i64 },
    ChoiceList(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    /// TOML literal.
    pub default: &'static str,
    pub doc: &'static str,
}

const fn int(min: i64, max: i64) -> Kind {
    Kind::Int { min, max }
}

const fn float(min: f64, max: f64) -> Kind {
    Kind::Float { min, max }
}

const NS: i64 = 1_000_000_000_000;
const BIG: i64 = i64::MAX;
const ALU_OPS: &[&str] = &[
    "add", "max", "min", "bitwise", "compare", "multiply", "divide",
];

macro_rules! keys {
    ($($key:literal : $kind:expr, $default:literal, $doc:literal;)*) => {
        &[$(KeySpec { key: $key, kind: $kind, default: $default, doc: $doc }),*]
    };
}

pub const SCHEMA: &[KeySpec] = keys! {
    "fabric.pcie.base_latency_ns": int(0, NS), "850", "peer PCIe traversal latency";
    "fabric.pcie.bandwidth_bytes_per_us": int(1, BIG), "12800", "peer PCIe bandwidth";
    "fabric.pcie.jitter": Kind::Dist, "\"uniform(0,40)\"", "added per peer traversal";
    "fabric.host.base_latency_ns": int(0, NS), "850", "root-complex traversal latency";
    "fabric.host.bandwidth_bytes_per_us": int(1, BIG), "12800", "root-complex bandwidth";
    "fabric.host.jitter": Kind::Dist, "\"uniform(0,400)\"", "added per host traversal";
    "fabric.net.base_latency_ns": int(0, NS), "25", "one Ethernet hop";
    "fabric.net.bandwidth_bytes_per_us": int(1, BIG), "12500", "Ethernet line rate";
    "fabric.net.jitter": Kind::Dist, "\"constant(0)\"", "added per Ethernet hop";
    "fabric.gpu_bar_bytes": int(0, BIG), "33285996544", "GPU BAR aperture";

    "switch.num_ports": int(1, 1024), "32", "";
    "switch.port_bytes_per_us": int(1, BIG), "12500", "per-port egress rate";
    "switch.pipeline": Kind::Dist, "\"uniform(1000,1100)\"", "ingress-to-egress pipeline latency";
    "switch.num_stages": int(1, 1024), "12", "";
    "switch.sram_bytes": int(0, BIG), "23068672", "";
    "switch.allowed_ops": Kind::ChoiceList(ALU_OPS), "[\"add\", \"max\", \"min\", \"bitwise\", \"compare\"]", "";

    "transport.mtu": int(1, 1 << 20), "4096", "payload bytes per packet";
    "transport.window": int(1, 1 << 20), "64", "go-back-N window in packets";
    "transport.rto_init_ns": int(1, NS), "20000", "";
    "transport.loss": float(0.0, 0.99), "0.0", "per-packet drop probability";
    "transport.header_bytes": int(0, 1 << 16), "0", "";
    "transport.ack_bytes": int(1, 1 << 16), "64", "";
    "transport.fpga_tx": Kind::Dist, "\"constant(40)\"", "FPGA stack per-packet tx cost";
    "transport.fpga_rx": Kind::Dist, "\"constant(40)\"", "";
    "transport.cpu_tx": Kind::Dist, "\"lognormal_mean(6000,0.25,24000)\"", "host stack per-packet tx cost";
    "transport.cpu_rx": Kind::Dist, "\"lognormal_mean(6000,0.25,24000)\"", "";
    "transport.cpu_cores": int(1, 1024), "1", "cores serving one host stack";

    "nvme.num_ssds": int(1, 65535), "10", "";
    "nvme.queue_depth": int(2, 65536), "1024", "SQ/CQ ring entries";
    "nvme.qpairs_per_core": int(1, 1024), "1", "per SSD, CPU driver";
    "nvme.read_cmd_cpu_ns": int(1, NS), "700", "core time per read command";
    "nvme.write_cmd_cpu_ns": int(1, NS), "2900", "core time per write command";
    "nvme.empty_poll_ns": int(0, NS), "50", "";
    "nvme.poll_interval_ns": int(1, NS), "2000", "";
    "nvme.poll_batch": int(1, 1 << 20), "32", "";
    "nvme.fpga_issue_ns": int(0, NS), "5", "";
    "nvme.fpga_capture_ns": int(0, NS), "100", "";
    "nvme.outstanding_per_ssd": int(1, 1 << 20), "256", "closed-loop depth";
    "nvme.nblocks_min": int(1, 1 << 16), "1", "";
    "nvme.nblocks_max": int(1, 1 << 16), "1", "";

    "ssd.capacity_blocks": int(1, BIG), "1875000000", "4 KiB blocks";
    "ssd.max_inflight": int(1, 1 << 20), "128", "";
    "ssd.read_latency": Kind::Dist, "\"lognormal_mean(80000,0.2,400000)\"", "";
    "ssd.write_latency": Kind::Dist, "\"lognormal_mean(80000,0.2,400000)\"", "";
    "ssd.read_iops": int(1, 1_000_000_000), "700000", "";
    "ssd.write_iops": int(1, 1_000_000_000), "170000", "";
    "ssd.fetch_latency_ns": int(0, NS), "1000", "";

    "cpu.num_cores": int(1, 4096), "48", "";
    "cpu.kernel_notify": Kind::Dist, "\"lognormal_mean(5000,0.25,20000)\"", "";
    "cpu.rdma_initiate": Kind::Dist, "\"lognormal_mean(3000,0.25,12000)\"", "";
    "cpu.compression_gbps_per_core": float(1e-6, 1e6), "1.6", "";

    "gpu.total_sms": int(1, 1 << 16), "132", "";
    "gpu.collective_sms": int(0, 1 << 16), "20", "";
    "gpu.gflops_per_sm": float(1e-6, 1e9), "500.0", "";
    "gpu.kernel_launch_ns": int(0, NS), "5000", "";

    "compress.ratio": float(1e-9, 1.0), "0.5", "output/input bytes";
    "compress.fpga_gbps": float(1e-6, 1e6), "100.0", "";
    "compress.fpga_pipeline_ns": int(0, NS), "1000", "";

    "scenario.num_servers": int(2, 1024), "8", "";
    "scenario.repetitions": int(1, 100_000_000), "1000", "";
    "scenario.warmup": int(0, 100_000_000), "100", "";
    "scenario.seed": int(0, BIG), "1", "";

    "gpu_offload.mode": Kind::Choice(&["both", "with", "without"]), "\"both\"", "";
    "gpu_offload.msg_bytes": int(1, 1 << 30), "49152", "";
    "gpu_offload.gap_ns": int(0, NS), "200000", "idle time between repetitions";

    "inaggr.mode": Kind::Choice(&["both", "fpga", "cpu"]), "\"both\"", "";
    "inaggr.slots": int(1, 1 << 16), "256", "32-bit values per contribution";
    "inaggr.gap_ns": int(0, NS), "1000", "";

    "ssd_cores.mode": Kind::Choice(&["both", "read", "write"]), "\"both\"", "";
    "ssd_cores.cores": Kind::IntList { min: 1, max: 4096 }, "[1, 2, 3, 4, 5, 6, 7, 8]", "";
    "ssd_cores.warmup_us": int(0, 1 << 30), "1000", "";
    "ssd_cores.window_us": int(1, 1 << 30), "5000", "";

    "middletier.mode": Kind::Choice(&["both", "cpu_only", "cpu_fpga"]), "\"both\"", "";
    "middletier.cores": Kind::IntList { min: 1, max: 4096 }, "[1, 2, 4, 8, 16, 24, 32, 40, 48]", "";
    "middletier.request_bytes": int(1, 1 << 30), "65536", "";
    "middletier.offered_gbps": float(1e-6, 1e6), "74.0", "";
    "middletier.max_outstanding": int(1, 1 << 20), "64", "";
    "middletier.replication": Kind::Choice(&["all", "any"]), "\"all\"", "acks awaited per request";
    "middletier.disk_servers": int(1, 64), "3", "";
    "middletier.fpga_ports": int(1, 64), "2", "";
    "middletier.warmup_us": int(0, 1 << 30), "5000", "";
    "middletier.window_us": int(1, 1 << 30), "50000", "";

    "interference.gemm_gflop": float(1e-9, 1e12), "1000.0", "";
    "interference.collective_bytes": int(1, BIG), "134217728", "all-reduce size";
};

pub fn spec(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

/// Fully resolved key/value set: defaults overlaid with parsed values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigTree {
    values: BTreeMap<String, Value>,
}

fn parse_literal(text: &str) -> std::result::Result<Value, String> {
    let table: toml::Table =
        toml::from_str(&format!("v = {text}")).map_err(|e| e.message().to_string())?;
    table
        .get("v")
        .cloned()
        .ok_or_else(|| "empty value".to_string())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line of the assignment of `key` (dotted, full path).
fn locate(text: &str, key: &str) -> Option<usize> {
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = s.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs: String = lhs.split('.').map(str::trim).collect::<Vec<_>>().join(".");
        let full = if section.is_empty() {
            lhs
        } else {
            format!("{section}.{lhs}")
        };
        if full == key {
            return Some(i + 1);
        }
    }
    None
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&path, t, out),
            other => out.push((path, other.clone())),
        }
    }
}

fn check(spec: &KeySpec, v: &Value) -> std::result::Result<Value, String> {
    let choice = |opts: &[&str], s: &str| {
        if opts.contains(&s) {
            Ok(())
        } else {
            Err(format!("`{s}` is not one of {}", opts.join("|")))
        }
    };
    match (spec.kind, v) {
        (Kind::Int { min, max }, Value::Integer(i)) => {
            if *i < min || *i > max {
                return Err(format!("{i} out of range [{min}, {max}]"));
            }
            Ok(v.clone())
        }
        (Kind::Float { min, max }, Value::Integer(_) | Value::Float(_)) => {
            let f = v
                .as_float()
                .unwrap_or_else(|| v.as_integer().unwrap_or(0) as f64);
            if !(f >= min && f <= max) {
                return Err(format!("{f} out of range [{min}, {max}]"));
            }
            Ok(Value::Float(f))
        }
        (Kind::Bool, Value::Boolean(_)) => Ok(v.clone()),
        (Kind::Choice(opts), Value::String(s)) => choice(opts, s).map(|_| v.clone()),
        (Kind::Dist, Value::String(s)) => s
            .parse::<Dist>()
            .map(|_| v.clone())
            .map_err(|e| e.to_string()),
        (Kind::IntList { min, max }, Value::Array(items)) => {
            if items.is_empty() {
                return Err("list must not be empty".into());
            }
            for item in items {
                match item.as_integer() {
                    Some(i) if i >= min && i <= max => {}
                    Some(i) => return Err(format!("element {i} out of range [{min}, {max}]")),
                    None => return Err(format!("expected integers, found {}", item.type_str())),
                }
            }
            Ok(v.clone())
        }
        (Kind::ChoiceList(opts), Value::Array(items)) => {
            for item in items {
                match item.as_str() {
                    Some(s) => choice(opts, s)?,
                    None => return Err(format!("expected strings, found {}", item.type_str())),
                }
            }
            Ok(v.clone())
        }
        (kind, v) => Err(format!(
            "expected {}, found {}",
            kind_name(kind),
            v.type_str()
        )),
    }
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Int { .. } => "integer",
        Kind::Float { .. } => "number",
        Kind::Bool => "boolean",
        Kind::Choice(_) => "string",
        Kind::Dist => "distribution string",
        Kind::IntList { .. } => "integer list",
        Kind::ChoiceList(_) => "string list",
    }
}

impl Default for ConfigTree {
    fn default() -> Self {
        ConfigTree::defaults()
    }
}

impl ConfigTree {
    pub fn defaults() -> Self {
        let values = SCHEMA
            .iter()
            .map(|s| {
                let v = parse_literal(s.default).expect("schema default is a TOML literal");
                let v = check(s, &v).expect("schema default passes its own check");
                (s.key.to_string(), v)
            })
            .collect();
        ConfigTree { values }
    }

    /// Parses `text` over the defaults. Errors carry the line when it can be
    /// located, otherwise the key.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => SimError::ConfigLine {
                line: line_of(text, span.start),
                msg: e.message().trim().to_string(),
            },
            None => SimError::Config(e.message().trim().to_string()),
        })?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut tree = ConfigTree::defaults();
        for (key, v) in flat {
            if key == "run" || key.starts_with("run.") {
                continue;
            }
            let fail = |msg: String| match locate(text, &key) {
                Some(line) => SimError::ConfigLine {
                    line,
                    msg: format!("`{key}`: {msg}"),
                },
                None => SimError::ConfigKey {
                    key: key.clone(),
                    msg,
                },
            };
            let spec = spec(&key).ok_or_else(|| fail("unknown key".into()))?;
            let v = check(spec, &v).map_err(fail)?;
            tree.values.insert(key, v);
        }
        tree.cross_check()?;
        Ok(tree)
    }

    /// Rules that span several keys; `set` checks keys one at a time.
    pub fn cross_check(&self) -> Result<()> {
        let bad = |key: &str, msg: String| SimError::ConfigKey {
            key: key.into(),
            msg,
        };
        if self.int("scenario.warmup") >= self.int("scenario.repetitions") {
            return Err(bad(
                "scenario.warmup",
                "must be smaller than scenario.repetitions".into(),
            ));
        }
        if self.int("nvme.nblocks_min") > self.int("nvme.nblocks_max") {
            return Err(bad("nvme.nblocks_min", "exceeds nvme.nblocks_max".into()));
        }
        if self.int("gpu.collective_sms") >= self.int("gpu.total_sms") {
            return Err(bad(
                "gpu.collective_sms",
                "must be below gpu.total_sms".into(),
            ));
        }
        let cores = self.int("cpu.num_cores");
        if let Some(c) = self
            .int_list("middletier.cores")
            .into_iter()
            .find(|&c| c > cores)
        {
            return Err(bad(
                "middletier.cores",
                format!("{c} exceeds cpu.num_cores = {cores}"),
            ));
        }
        Ok(())
    }

    /// Sets one key from a TOML literal (bare words are taken as strings).
    pub fn set(&mut self, key: &str, literal: &str) -> Result<()> {
        let spec = spec(key).ok_or_else(|| SimError::ConfigKey {
            key: key.into(),
            msg: "unknown key".into(),
        })?;
        let v = parse_literal(literal).or_else(|_| parse_literal(&format!("{literal:?}")));
        let v = v
            .and_then(|v| check(spec, &v))
            .map_err(|msg| SimError::ConfigKey {
                key: key.into(),
                msg,
            })?;
        self.values.insert(key.into(), v);
        Ok(())
    }

    pub fn set_value(&mut self, key: &str, v: Value) -> Result<()> {
        let spec = spec(key).ok_or_else(|| SimError::ConfigKey {
            key: key.into(),
            msg: "unknown key".into(),
        })?;
        let v = check(spec, &v).map_err(|msg| SimError::ConfigKey {
            key: key.into(),
            msg,
        })?;
        self.values.insert(key.into(), v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    fn must(&self, key: &str) -> &Value {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not in the schema"))
    }

    pub fn int(&self, key: &str) -> i64 {
        self.must(key).as_integer().expect("schema-checked integer")
    }

    pub fn uint(&self, key: &str) -> u64 {
        self.int(key) as u64
    }

    pub fn float(&self, key: &str) -> f64 {
        self.must(key).as_float().expect("schema-checked float")
    }

    pub fn string(&self, key: &str) -> &str {
        self.must(key).as_str().expect("schema-checked string")
    }

    pub fn ns(&self, key: &str) -> SimTime {
        SimTime::ns(self.uint(key))
    }

    pub fn dist(&self, key: &str) -> Dist {
        self.string(key)
            .parse()
            .expect("schema-checked distribution")
    }

    pub fn int_list(&self, key: &str) -> Vec<i64> {
        let items = self.must(key).as_array().expect("schema-checked list");
        items.iter().filter_map(Value::as_integer).collect()
    }

    pub fn str_list(&self, key: &str) -> Vec<String> {
        let items = self.must(key).as_array().expect("schema-checked list");
        items
            .iter()
            .filter_map(|v| v.as_str().map(String::from))
            .collect()
    }

    /// Canonical text form; `parse(serialize(t)) == t`.
    pub fn serialize(&self) -> String {
        let mut sections: BTreeMap<&str, Vec<(&str, &Value)>> = BTreeMap::new();
        for (k, v) in &self.values {
            let (section, key) = k.rsplit_once('.').unwrap_or(("", k));
            sections.entry(section).or_default().push((key, v));
        }
        let mut out = String::new();
        for (section, entries) in sections {
            let _ = writeln!(out, "[{section}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_config(text: &str) -> Result<ConfigTree> {
    ConfigTree::parse(text)
}

/// Packet-processing costs of the two transport stack kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub gbn: GbnConfig,
    pub fpga_tx: Dist,
    pub fpga_rx: Dist,
    pub cpu_tx: Dist,
    pub cpu_rx: Dist,
    pub cpu_cores: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressConfig {
    pub ratio: f64,
    pub fpga_gbps: f64,
    pub fpga_pipeline: SimTime,
}

/// Typed view of a [`ConfigTree`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub fabric: FabricConfig,
    pub switch: P4SwitchModel,
    pub transport: TransportConfig,
    pub nvme: NvmeConfig,
    pub cpu_cores: usize,
    pub cpu: CpuCosts,
    pub gpu: GpuModel,
    pub compress: CompressConfig,
    pub tree: ConfigTree,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::from_tree(&ConfigTree::defaults()).expect("defaults are valid")
    }
}

impl SimConfig {
    pub fn from_tree(t: &ConfigTree) -> Result<Self> {
        t.cross_check()?;
        let link = |p: &str| -> Result<LinkModel> {
            Ok(LinkModel::new(
                t.uint(&format!("{p}.base_latency_ns")),
                t.uint(&format!("{p}.bandwidth_bytes_per_us")),
            )?
            .with_jitter(t.dist(&format!("{p}.jitter"))))
        };
        let mtu = t.uint("transport.mtu");
        let fabric = FabricConfig {
            pcie: link("fabric.pcie")?,
            host: link("fabric.host")?,
            net: link("fabric.net")?.with_mtu(mtu),
            gpu_bar_bytes: t.uint("fabric.gpu_bar_bytes"),
        };
        let allowed_ops = t
            .str_list("switch.allowed_ops")
            .iter()
            .map(|s| s.parse::<AluOp>())
            .collect::<Result<_>>()?;
        let switch = P4SwitchModel {
            num_ports: t.uint("switch.num_ports") as u32,
            port_bytes_per_us: t.uint("switch.port_bytes_per_us"),
            pipeline: t.dist("switch.pipeline"),
            num_stages: t.uint("switch.num_stages") as u32,
            sram_bytes: t.uint("switch.sram_bytes"),
            allowed_ops,
        };
        switch.validate()?;
        let gbn = GbnConfig {
            mtu,
            window: t.uint("transport.window") as usize,
            rto_init: t.ns("transport.rto_init_ns"),
            loss: t.float("transport.loss"),
            header_bytes: t.uint("transport.header_bytes"),
            ack_bytes: t.uint("transport.ack_bytes"),
        };
        gbn.validate()?;
        let transport = TransportConfig {
            gbn,
            fpga_tx: t.dist("transport.fpga_tx"),
            fpga_rx: t.dist("transport.fpga_rx"),
            cpu_tx: t.dist("transport.cpu_tx"),
            cpu_rx: t.dist("transport.cpu_rx"),
            cpu_cores: t.uint("transport.cpu_cores") as usize,
        };
        let ssd = SsdModel {
            capacity_blocks: t.uint("ssd.capacity_blocks"),
            max_inflight: t.uint("ssd.max_inflight") as usize,
            read_latency: t.dist("ssd.read_latency"),
            write_latency: t.dist("ssd.write_latency"),
            read_iops: t.uint("ssd.read_iops"),
            write_iops: t.uint("ssd.write_iops"),
            fetch_latency: t.ns("ssd.fetch_latency_ns"),
        };
        let nvme = NvmeConfig {
            num_ssds: t.uint("nvme.num_ssds") as usize,
            queue_depth: t.uint("nvme.queue_depth") as u32,
            qpairs_per_core: t.uint("nvme.qpairs_per_core") as usize,
            ssd,
            read_cmd_cpu: t.ns("nvme.read_cmd_cpu_ns"),
            write_cmd_cpu: t.ns("nvme.write_cmd_cpu_ns"),
            empty_poll: t.ns("nvme.empty_poll_ns"),
            poll_interval: t.ns("nvme.poll_interval_ns"),
            poll_batch: t.uint("nvme.poll_batch") as usize,
            fpga_issue: t.ns("nvme.fpga_issue_ns"),
            fpga_capture: t.ns("nvme.fpga_capture_ns"),
        };
        nvme.validate()?;
        let cpu = CpuCosts {
            kernel_notify: t.dist("cpu.kernel_notify"),
            rdma_initiate: t.dist("cpu.rdma_initiate"),
            compression_gbps_per_core: t.float("cpu.compression_gbps_per_core"),
        };
        let gpu = GpuModel {
            total_sms: t.uint("gpu.total_sms") as u32,
            collective_sms: t.uint("gpu.collective_sms") as u32,
            gflops_per_sm: t.float("gpu.gflops_per_sm"),
            kernel_launch: t.ns("gpu.kernel_launch_ns"),
            ..GpuModel::default()
        };
        gpu.validate()?;
        let compress = CompressConfig {
            ratio: t.float("compress.ratio"),
            fpga_gbps: t.float("compress.fpga_gbps"),
            fpga_pipeline: t.ns("compress.fpga_pipeline_ns"),
        };
        Ok(SimConfig {
            fabric,
            switch,
            transport,
            nvme,
            cpu_cores: t.uint("cpu.num_cores") as usize,
            cpu,
            gpu,
            compress,
            tree: t.clone(),
        })
    }
}
