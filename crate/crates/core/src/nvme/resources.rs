use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpgaResources {
    pub lut: u64,
    pub ff: u64,
    pub bram: u64,
    pub uram: u64,
}

impl FpgaResources {
    fn fields(&self) -> [(&'static str, u64); 4] {
        [
            ("lut", self.lut),
            ("ff", self.ff),
            ("bram", self.bram),
            ("uram", self.uram),
        ]
    }
}

/// Linear cost of the SSD queue-controller logic, anchored on a measured
/// 10-SSD build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpgaResourceModel {
    /// Usage with `reference_ssds` SSDs.
    pub reference: FpgaResources,
    pub reference_ssds: u64,
    pub board: FpgaResources,
}

impl Default for FpgaResourceModel {
    fn default() -> Self {
        FpgaResourceModel {
            reference: FpgaResources {
                lut: 45_000,
                ff: 109_000,
                bram: 164,
                uram: 2,
            },
            reference_ssds: 10,
            board: Self::U50,
        }
    }
}

impl FpgaResourceModel {
    /// Alveo U50.
    pub const U50: FpgaResources = FpgaResources {
        lut: 872_000,
        ff: 1_743_000,
        bram: 1_344,
        uram: 640,
    };

    /// Usage for `n` SSDs: `ceil(n * reference / reference_ssds)` per
    /// resource, so fractional per-SSD BRAM/URAM round up but the
    /// reference point is reproduced exactly.
    pub fn usage(&self, n_ssds: u64) -> Result<FpgaResources> {
        if n_ssds == 0 {
            return Err(SimError::Precondition(
                "fpga_resources needs n_ssds >= 1".into(),
            ));
        }
        let scale = |v: u64| (n_ssds * v).div_ceil(self.reference_ssds);
        let r = self.reference;
        let usage = FpgaResources {
            lut: scale(r.lut),
            ff: scale(r.ff),
            bram: scale(r.bram),
            uram: scale(r.uram),
        };
        for ((name, used), (_, avail)) in usage.fields().into_iter().zip(self.board.fields()) {
            if used > avail {
                return Err(SimError::Capacity(format!(
                    "{n_ssds} SSD controllers need {used} {name}, board has {avail}"
                )));
            }
        }
        Ok(usage)
    }
}
