use thiserror::Error;

use crate::sim::SimTime;

/// Every failure the simulator can report.
///
/// Variants are grouped by [`SimError::category`] so that the CLI can map
/// them to stable exit codes and a machine-readable prefix.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),

    #[error("config line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    #[error("config key `{key}`: {msg}")]
    ConfigKey { key: String, msg: String },

    #[error("unknown component id {0}")]
    UnknownTarget(u32),

    #[error("event scheduled at {at} ns but clock is already at {now} ns")]
    Causality { at: SimTime, now: SimTime },

    #[error("protocol fault: {0}")]
    Protocol(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("MMIO fault: register {0:#x} is not mapped")]
    UnmappedRegister(u64),

    #[error(
        "BAR violation: access [{offset:#x}, +{len}) outside the {bar_bytes}-byte GPU BAR window"
    )]
    BarViolation {
        offset: u64,
        len: u64,
        bar_bytes: u64,
    },

    #[error("no route from {from} to {to}")]
    NoRoute { from: String, to: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("io: {0}")]
    Io(String),
}

impl SimError {
    /// Stable, machine-readable error class.
    pub fn category(&self) -> &'static str {
        match self {
            SimError::Config(_)
            | SimError::ConfigLine { .. }
            | SimError::ConfigKey { .. }
            | SimError::UnknownTarget(_)
            | SimError::NoRoute { .. }
            | SimError::InvalidDistribution(_) => "config",
            SimError::Causality { .. } | SimError::Protocol(_) => "protocol",
            SimError::UnmappedRegister(_) | SimError::BarViolation { .. } => "fault",
            SimError::Capacity(_) => "capacity",
            SimError::Precondition(_) => "precondition",
            SimError::Io(_) => "io",
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "protocol" => 3,
            "fault" => 4,
            "capacity" => 5,
            "precondition" => 6,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
