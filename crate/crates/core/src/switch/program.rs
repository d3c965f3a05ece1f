use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SimError};

/// ALU operations a switch program may request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AluOp {
    Add,
    Max,
    Min,
    Bitwise,
    Compare,
    Multiply,
    Divide,
}

impl AluOp {
    pub const ALL: [AluOp; 7] = [
        AluOp::Add,
        AluOp::Max,
        AluOp::Min,
        AluOp::Bitwise,
        AluOp::Compare,
        AluOp::Multiply,
        AluOp::Divide,
    ];

    /// What a Tofino-class stage ALU can do.
    pub fn switch_native() -> BTreeSet<AluOp> {
        [
            AluOp::Add,
            AluOp::Max,
            AluOp::Min,
            AluOp::Bitwise,
            AluOp::Compare,
        ]
        .into()
    }
}

impl fmt::Display for AluOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AluOp::Add => "add",
            AluOp::Max => "max",
            AluOp::Min => "min",
            AluOp::Bitwise => "bitwise",
            AluOp::Compare => "compare",
            AluOp::Multiply => "multiply",
            AluOp::Divide => "divide",
        })
    }
}

impl FromStr for AluOp {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        AluOp::ALL
            .into_iter()
            .find(|op| op.to_string() == s)
            .ok_or_else(|| SimError::Config(format!("unknown ALU op `{s}`")))
    }
}

/// Resource footprint of a data-plane program.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SwitchProgram {
    pub stages_used: u32,
    pub ops_used: BTreeSet<AluOp>,
    pub state_bytes: u64,
}

/// Switch resources a program is checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchLimits {
    pub num_stages: u32,
    pub sram_bytes: u64,
    pub allowed_ops: BTreeSet<AluOp>,
}

/// The first violated constraint, checked in the order stages, ops, SRAM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Stages { used: u32, available: u32 },
    UnsupportedOp(AluOp),
    Sram { used: u64, available: u64 },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Stages { used, available } => {
                write!(f, "stages: {used} used, {available} available")
            }
            Rejection::UnsupportedOp(op) => write!(f, "unsupported op: {op}"),
            Rejection::Sram { used, available } => {
                write!(f, "sram: {used} bytes used, {available} available")
            }
        }
    }
}

pub fn validate_program(p: &SwitchProgram, limits: &SwitchLimits) -> Result<(), Rejection> {
    if p.stages_used > limits.num_stages {
        return Err(Rejection::Stages {
            used: p.stages_used,
            available: limits.num_stages,
        });
    }
    if let Some(op) = p
        .ops_used
        .iter()
        .find(|op| !limits.allowed_ops.contains(op))
    {
        return Err(Rejection::UnsupportedOp(*op));
    }
    if p.state_bytes > limits.sram_bytes {
        return Err(Rejection::Sram {
            used: p.state_bytes,
            available: limits.sram_bytes,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wedge() -> SwitchLimits {
        SwitchLimits {
            num_stages: 12,
            sram_bytes: 22 << 20,
            allowed_ops: AluOp::switch_native(),
        }
    }

    fn prog(stages: u32, ops: &[AluOp], bytes: u64) -> SwitchProgram {
        SwitchProgram {
            stages_used: stages,
            ops_used: ops.iter().copied().collect(),
            state_bytes: bytes,
        }
    }

    #[test]
    fn thirteen_stages_rejected() {
        let r = validate_program(&prog(13, &[AluOp::Add], 1024), &wedge());
        assert_eq!(
            r,
            Err(Rejection::Stages {
                used: 13,
                available: 12
            })
        );
    }

    #[test]
    fn multiply_rejected() {
        let r = validate_program(&prog(4, &[AluOp::Multiply], 1024), &wedge());
        assert_eq!(r, Err(Rejection::UnsupportedOp(AluOp::Multiply)));
        let r = validate_program(&prog(4, &[AluOp::Add, AluOp::Divide], 1024), &wedge());
        assert_eq!(r, Err(Rejection::UnsupportedOp(AluOp::Divide)));
    }

    #[test]
    fn empty_program_admitted() {
        assert_eq!(validate_program(&prog(0, &[], 0), &wedge()), Ok(()));
    }

    #[test]
    fn sram_rejected() {
        let r = validate_program(&prog(12, &[AluOp::Max], (22 << 20) + 1), &wedge());
        assert!(matches!(r, Err(Rejection::Sram { .. })));
    }

    #[test]
    fn op_names_roundtrip() {
        for op in AluOp::ALL {
            assert_eq!(op.to_string().parse::<AluOp>().unwrap(), op);
        }
        assert!("xor".parse::<AluOp>().is_err());
    }
}
