use crate::error::{Result, SimError};

pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;

/// PCIe-visible aperture of GPU memory.
///
/// Peer devices may only touch GPU addresses that fall inside a range that
/// has been registered (pinned and mapped) within the aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct GpuBarWindow {
    size_bytes: u64,
    mapped: Vec<(u64, u64)>,
}

impl GpuBarWindow {
    pub fn new(size_bytes: u64) -> Self {
        GpuBarWindow {
            size_bytes,
            mapped: Vec::new(),
        }
    }

    /// Quadro RTX 8000: 256 MiB BAR, 32 MiB reserved, 220 MiB usable.
    pub fn rtx8000() -> Self {
        Self::new(220 * MIB)
    }

    /// Tesla V100: at least 31 GiB exposed.
    pub fn v100() -> Self {
        Self::new(31 * GIB)
    }

    /// Window that maps its whole aperture.
    pub fn fully_mapped(size_bytes: u64) -> Self {
        let mut w = Self::new(size_bytes);
        w.map(0, size_bytes).expect("whole aperture fits");
        w
    }

    pub fn size_bytes(&self) -> u64 {
        self.size_bytes
    }

    pub fn map(&mut self, offset: u64, len: u64) -> Result<()> {
        let end = offset.checked_add(len);
        if len == 0 || end.is_none_or(|e| e > self.size_bytes) {
            return Err(self.violation(offset, len));
        }
        self.mapped.push((offset, len));
        Ok(())
    }

    /// Checks a P2P access of `len` bytes at `offset`.
    pub fn check(&self, offset: u64, len: u64) -> Result<()> {
        let len = len.max(1);
        let Some(end) = offset.checked_add(len) else {
            return Err(self.violation(offset, len));
        };
        let inside = end <= self.size_bytes
            && self
                .mapped
                .iter()
                .any(|&(o, l)| offset >= o && end <= o + l);
        if inside {
            Ok(())
        } else {
            Err(self.violation(offset, len))
        }
    }

    fn violation(&self, offset: u64, len: u64) -> SimError {
        SimError::BarViolation {
            offset,
            len,
            bar_bytes: self.size_bytes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtx8000_rejects_230mib() {
        let w = GpuBarWindow::fully_mapped(GpuBarWindow::rtx8000().size_bytes());
        assert!(w.check(10 * MIB, 4096).is_ok());
        let err = w.check(230 * MIB, 4096).unwrap_err();
        assert!(matches!(err, SimError::BarViolation { .. }));
        assert_eq!(err.category(), "fault");
    }

    #[test]
    fn v100_accepts_large_offsets() {
        let w = GpuBarWindow::fully_mapped(GpuBarWindow::v100().size_bytes());
        assert!(w.check(230 * MIB, 4096).is_ok());
        assert!(w.check(30 * GIB, MIB).is_ok());
    }

    #[test]
    fn unmapped_range_inside_aperture_faults() {
        let mut w = GpuBarWindow::new(64 * MIB);
        w.map(0, MIB).unwrap();
        assert!(w.check(0, MIB).is_ok());
        assert!(w.check(MIB - 1, 2).is_err());
        assert!(w.map(63 * MIB, 2 * MIB).is_err());
    }
}
