use crate::error::{Result, SimError};

/// One in-switch aggregation session: integer slot registers summed across
/// a fixed worker set, released as a broadcast once every worker arrived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationSession {
    pub session_id: u32,
    num_workers: usize,
    slots: Vec<u32>,
    arrived: Vec<bool>,
    count: usize,
    round: u64,
}

impl AggregationSession {
    pub fn new(session_id: u32, num_workers: usize, num_slots: usize) -> Result<Self> {
        if num_workers == 0 || num_slots == 0 {
            return Err(SimError::Config(
                "aggregation session needs at least one worker and one slot".into(),
            ));
        }
        Ok(AggregationSession {
            session_id,
            num_workers,
            slots: vec![0; num_slots],
            arrived: vec![false; num_workers],
            count: 0,
            round: 0,
        })
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Completed rounds.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn state_bytes(&self) -> u64 {
        4 * self.slots.len() as u64
    }

    /// Adds one worker's vector. Returns the aggregate when this was the
    /// round's last contribution, after which the session is reset.
    pub fn contribute(&mut self, worker: usize, values: &[u32]) -> Result<Option<Vec<u32>>> {
        if worker >= self.num_workers {
            return Err(SimError::Protocol(format!(
                "session {}: worker {worker} outside 0..{}",
                self.session_id, self.num_workers
            )));
        }
        if values.len() != self.slots.len() {
            return Err(SimError::Protocol(format!(
                "session {}: vector length {} != {} slots",
                self.session_id,
                values.len(),
                self.slots.len()
            )));
        }
        if self.arrived[worker] {
            return Err(SimError::Protocol(format!(
                "session {}: duplicate contribution from worker {worker} in round {}",
                self.session_id, self.round
            )));
        }
        self.arrived[worker] = true;
        self.count += 1;
        for (s, v) in self.slots.iter_mut().zip(values) {
            *s = s.wrapping_add(*v);
        }
        if self.count < self.num_workers {
            return Ok(None);
        }
        let result = std::mem::replace(&mut self.slots, vec![0; values.len()]);
        self.arrived.fill(false);
        self.count = 0;
        self.round += 1;
        Ok(Some(result))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_worker_is_identity() {
        let mut s = AggregationSession::new(0, 1, 3).unwrap();
        assert_eq!(s.contribute(0, &[4, 5, 6]).unwrap(), Some(vec![4, 5, 6]));
    }

    #[test]
    fn three_workers_sum() {
        let mut s = AggregationSession::new(0, 3, 2).unwrap();
        assert_eq!(s.contribute(0, &[1, 2]).unwrap(), None);
        assert_eq!(s.contribute(2, &[100, 200]).unwrap(), None);
        assert_eq!(s.contribute(1, &[10, 20]).unwrap(), Some(vec![111, 222]));
        assert_eq!(s.round(), 1);
    }

    #[test]
    fn wraps_at_32_bits() {
        let mut s = AggregationSession::new(0, 2, 1).unwrap();
        s.contribute(0, &[0x8000_0000]).unwrap();
        assert_eq!(s.contribute(1, &[0x8000_0000]).unwrap(), Some(vec![0]));
    }

    #[test]
    fn faults() {
        let mut s = AggregationSession::new(0, 2, 2).unwrap();
        s.contribute(0, &[1, 1]).unwrap();
        assert!(matches!(
            s.contribute(0, &[1, 1]),
            Err(SimError::Protocol(_))
        ));
        assert!(s.contribute(1, &[1]).is_err());
        assert!(s.contribute(2, &[1, 1]).is_err());
    }

    #[test]
    fn rounds_are_isolated() {
        let mut s = AggregationSession::new(0, 2, 1).unwrap();
        s.contribute(0, &[1]).unwrap();
        assert_eq!(s.contribute(1, &[2]).unwrap(), Some(vec![3]));
        s.contribute(1, &[10]).unwrap();
        assert_eq!(s.contribute(0, &[20]).unwrap(), Some(vec![30]));
    }
}
