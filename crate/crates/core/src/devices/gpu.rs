use crate::error::{Result, SimError};
use crate::fabric::{Device, Fabric, GpuBarWindow, PostedWrite};
use crate::sim::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct GpuModel {
    pub total_sms: u32,
    /// SMs taken by an on-GPU collective kernel while it runs.
    pub collective_sms: u32,
    pub gflops_per_sm: f64,
    /// CPU-side cost of launching a kernel.
    pub kernel_launch: SimTime,
    pub bar: GpuBarWindow,
}

impl Default for GpuModel {
    fn default() -> Self {
        GpuModel {
            total_sms: 132,
            collective_sms: 20,
            gflops_per_sm: 500.0,
            kernel_launch: SimTime::us(5),
            bar: GpuBarWindow::v100(),
        }
    }
}

impl GpuModel {
    pub fn validate(&self) -> Result<()> {
        if self.total_sms == 0 || self.collective_sms >= self.total_sms {
            return Err(SimError::Config(format!(
                "gpu: collective_sms {} must be < total_sms {}",
                self.collective_sms, self.total_sms
            )));
        }
        if self.gflops_per_sm.is_nan() || self.gflops_per_sm <= 0.0 {
            return Err(SimError::Config("gpu: gflops_per_sm must be > 0".into()));
        }
        Ok(())
    }

    pub fn available_sms(&self, collective_active: bool) -> u32 {
        if collective_active {
            self.total_sms - self.collective_sms
        } else {
            self.total_sms
        }
    }

    /// GEMM duration in (fractional) nanoseconds.
    ///
    /// The interfered time is derived from the baseline by the SM ratio so
    /// that the slowdown is exactly `total / available` up to one rounding.
    pub fn gemm_ns(&self, flops: f64, collective_active: bool) -> Result<f64> {
        if flops.is_nan() || flops <= 0.0 {
            return Err(SimError::Precondition("gemm flops must be > 0".into()));
        }
        self.validate()?;
        // GFLOP/s per SM == FLOP per ns per SM
        let base = flops / (self.gflops_per_sm * self.total_sms as f64);
        if !collective_active {
            return Ok(base);
        }
        Ok(base * self.slowdown())
    }

    pub fn gemm_time(&self, flops: f64, collective_active: bool) -> Result<SimTime> {
        Ok(SimTime::from_ns_f64_ceil(
            self.gemm_ns(flops, collective_active)?,
        ))
    }

    /// `total / available` while a collective occupies its SMs.
    pub fn slowdown(&self) -> f64 {
        self.total_sms as f64 / self.available_sms(true) as f64
    }

    /// One GPU store to an FPGA doorbell; no kernel launch, no CPU time.
    pub fn trigger_doorbell(
        &self,
        fabric: &mut Fabric,
        addr: u64,
        value: u64,
    ) -> Result<PostedWrite> {
        fabric.mmio_write(Device::Gpu, Device::Fpga, addr, value)
    }
}
