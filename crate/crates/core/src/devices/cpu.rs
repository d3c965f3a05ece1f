use std::collections::VecDeque;

use crate::error::{Result, SimError};
use crate::sim::{Dist, SimTime};

/// One CPU core modelled as a FIFO single server.
///
/// Work is accepted eagerly: `execute` returns the completion time
/// immediately, so the core's queue is implicit in `free_at`.
#[derive(Debug, Clone, Default)]
pub struct Core {
    free_at: SimTime,
    /// Busy intervals that may still overlap a future utilisation query.
    open: VecDeque<(SimTime, SimTime)>,
    closed_busy: SimTime,
    total_busy: SimTime,
    items: u64,
}

impl Core {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `work` after whatever is already queued; returns its completion.
    pub fn execute(&mut self, now: SimTime, work: SimTime) -> SimTime {
        while let Some(&(s, e)) = self.open.front() {
            if e > now {
                break;
            }
            self.closed_busy += e - s;
            self.open.pop_front();
        }
        let start = now.max(self.free_at);
        let end = start + work;
        self.free_at = end;
        self.total_busy += work;
        self.items += 1;
        if work > SimTime::ZERO {
            self.open.push_back((start, end));
        }
        end
    }

    pub fn free_at(&self) -> SimTime {
        self.free_at
    }

    pub fn is_idle(&self, now: SimTime) -> bool {
        self.free_at <= now
    }

    /// All work ever accepted, including the part still in the future.
    pub fn total_busy(&self) -> SimTime {
        self.total_busy
    }

    pub fn items(&self) -> u64 {
        self.items
    }

    /// Busy time accrued strictly before `t`. `t` must not precede the last
    /// `execute` call's `now`.
    pub fn busy_before(&self, t: SimTime) -> SimTime {
        let open: SimTime = self
            .open
            .iter()
            .map(|&(s, e)| e.min(t).saturating_sub(s))
            .sum();
        self.closed_busy + open
    }
}

/// Host software costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuCosts {
    /// GPU-to-CPU notification path (flag poll and wake-up).
    pub kernel_notify: Dist,
    /// Posting an RDMA work request.
    pub rdma_initiate: Dist,
    pub compression_gbps_per_core: f64,
}

impl Default for CpuCosts {
    fn default() -> Self {
        CpuCosts {
            kernel_notify: Dist::lognormal_with_mean(5_000.0, 0.25, 20_000).unwrap(),
            rdma_initiate: Dist::lognormal_with_mean(3_000.0, 0.25, 12_000).unwrap(),
            compression_gbps_per_core: 1.6,
        }
    }
}

/// A set of cores with per-core utilisation accounting.
#[derive(Debug, Clone)]
pub struct CpuModel {
    cores: Vec<Core>,
    pub costs: CpuCosts,
}

impl CpuModel {
    pub fn new(num_cores: usize, costs: CpuCosts) -> Self {
        CpuModel {
            cores: vec![Core::new(); num_cores],
            costs,
        }
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn core(&self, id: usize) -> Result<&Core> {
        self.cores.get(id).ok_or_else(|| {
            SimError::Config(format!("no CPU core {id} (have {})", self.cores.len()))
        })
    }

    pub fn core_execute(&mut self, id: usize, now: SimTime, work: SimTime) -> Result<SimTime> {
        if work == SimTime::ZERO {
            return Err(SimError::Precondition("zero-length work item".into()));
        }
        let n = self.cores.len();
        let core = self
            .cores
            .get_mut(id)
            .ok_or_else(|| SimError::Config(format!("no CPU core {id} (have {n})")))?;
        Ok(core.execute(now, work))
    }

    /// Core that frees up first; ties go to the lowest index.
    pub fn least_loaded(&self) -> Option<usize> {
        (0..self.cores.len()).min_by_key(|&i| (self.cores[i].free_at, i))
    }

    pub fn total_busy(&self) -> SimTime {
        self.cores.iter().map(Core::total_busy).sum()
    }

    /// Per-core busy fraction over `[from, to)`.
    pub fn utilization(&self, from_busy: &[SimTime], from: SimTime, to: SimTime) -> Vec<f64> {
        let span = to.saturating_sub(from).as_ns().max(1) as f64;
        self.cores
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let b = c
                    .busy_before(to)
                    .saturating_sub(from_busy.get(i).copied().unwrap_or_default());
                (b.as_ns() as f64 / span).min(1.0)
            })
            .collect()
    }

    /// Snapshot of per-core busy time before `t`, for windowed utilisation.
    pub fn busy_snapshot(&self, t: SimTime) -> Vec<SimTime> {
        self.cores.iter().map(|c| c.busy_before(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStream;

    #[test]
    fn idle_core_and_serialisation() {
        let mut cpu = CpuModel::new(2, CpuCosts::default());
        let t0 = SimTime::ns(100);
        assert_eq!(
            cpu.core_execute(0, t0, SimTime::ns(1000)).unwrap(),
            SimTime::ns(1100)
        );
        assert_eq!(
            cpu.core_execute(0, t0, SimTime::ns(1000)).unwrap(),
            SimTime::ns(2100)
        );
        assert_eq!(
            cpu.core_execute(1, t0, SimTime::ns(1000)).unwrap(),
            SimTime::ns(1100)
        );
        assert!(cpu.core_execute(2, t0, SimTime::ns(1)).is_err());
        assert!(cpu.core_execute(0, t0, SimTime::ZERO).is_err());
        assert_eq!(cpu.total_busy(), SimTime::ns(3000));
    }

    #[test]
    fn windowed_busy_time() {
        let mut c = Core::new();
        c.execute(SimTime::ns(0), SimTime::ns(100));
        assert_eq!(c.busy_before(SimTime::ns(50)), SimTime::ns(50));
        c.execute(SimTime::ns(300), SimTime::ns(100));
        assert_eq!(c.busy_before(SimTime::ns(350)), SimTime::ns(150));
        assert_eq!(c.busy_before(SimTime::ns(1000)), SimTime::ns(200));
    }

    #[test]
    fn md1_sojourn_matches_formula() {
        // M/D/1 at rho = 0.5: W = D + rho*D / (2(1 - rho)) = 1.5 D.
        let d = SimTime::ns(1_000);
        let mut core = Core::new();
        let mut rng = RngStream::new(11, "md1");
        let mut now = SimTime::ZERO;
        let n = 200_000;
        let mut total = 0u64;
        for _ in 0..n {
            now += rng.exponential_ns(2_000.0);
            total += (core.execute(now, d) - now).as_ns();
        }
        let w = total as f64 / n as f64;
        let oracle = 1.5 * d.as_ns() as f64;
        assert!((w / oracle - 1.0).abs() < 0.05, "W = {w}, oracle {oracle}");
        let util = core.busy_before(now).as_ns() as f64 / now.as_ns() as f64;
        assert!((util - 0.5).abs() < 0.02, "{util}");
    }
}
