use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt::Write as _;

use super::{Metrics, SimTime};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId(pub u32);

/// Handle returned by `schedule`, usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub u64);

/// Short static name of an event payload, used in traces.
pub trait EventKind {
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_time: SimTime,
    pub seq: u64,
    pub target: ComponentId,
    pub payload: P,
}

impl<P> Event<P> {
    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}
impl<P> Queued<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_time, self.0.seq)
    }
}

/// One dispatched event, as written to the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub seq: u64,
    pub component: ComponentId,
    pub kind: &'static str,
}

/// Receives events from the run loop.
pub trait Handler<P> {
    fn handle(&mut self, engine: &mut Engine<P>, event: Event<P>) -> Result<()>;
}

/// Single-threaded discrete-event engine.
///
/// Events fire in `(fire_time, seq)` order; `seq` is a per-engine insertion
/// counter, so events scheduled for the same instant are delivered FIFO.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    cancelled: HashSet<u64>,
    components: Vec<String>,
    trace: Option<Vec<TraceRecord>>,
    dispatched: u64,
    metrics: Metrics,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            components: Vec::new(),
            trace: None,
            dispatched: 0,
            metrics: Metrics::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>) -> ComponentId {
        self.components.push(name.into());
        ComponentId(self.components.len() as u32 - 1)
    }

    pub fn component_name(&self, id: ComponentId) -> Option<&str> {
        self.components.get(id.0 as usize).map(String::as_str)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    /// Trace as `time_ns<TAB>seq<TAB>component<TAB>kind` lines.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for r in self.trace.iter().flatten() {
            let name = self.component_name(r.component).unwrap_or("?");
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.time, r.seq, name, r.kind);
        }
        out
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn metrics_mut(&mut self) -> &mut Metrics {
        &mut self.metrics
    }

    pub fn take_metrics(&mut self) -> Metrics {
        std::mem::take(&mut self.metrics)
    }

    pub fn schedule(&mut self, delay: SimTime, target: ComponentId, payload: P) -> Result<EventId> {
        let at = self
            .now
            .checked_add(delay)
            .ok_or_else(|| SimError::Protocol(format!("delay {delay} overflows the clock")))?;
        self.schedule_at(at, target, payload)
    }

    /// Schedules at an absolute time; `at < now` is a causality violation.
    pub fn schedule_at(&mut self, at: SimTime, target: ComponentId, payload: P) -> Result<EventId> {
        if target.0 as usize >= self.components.len() {
            return Err(SimError::UnknownTarget(target.0));
        }
        if at < self.now {
            return Err(SimError::Causality { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued(Event {
            fire_time: at,
            seq,
            target,
            payload,
        })));
        Ok(EventId(seq))
    }

    /// Tombstones a pending event. Returns false if it was already cancelled
    /// or never issued.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_seq {
            return false;
        }
        self.cancelled.insert(id.0)
    }

    fn pop_live(&mut self, limit: SimTime) -> Option<Event<P>> {
        loop {
            let head = self.queue.peek()?;
            if head.0 .0.fire_time > limit {
                return None;
            }
            let Reverse(Queued(ev)) = self.queue.pop()?;
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            return Some(ev);
        }
    }

    /// Pops and dispatches one event at or before `limit`.
    pub fn step<H: Handler<P>>(&mut self, handler: &mut H, limit: SimTime) -> Result<bool>
    where
        P: EventKind,
    {
        let Some(ev) = self.pop_live(limit) else {
            return Ok(false);
        };
        debug_assert!(ev.fire_time >= self.now);
        self.now = ev.fire_time;
        self.dispatched += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                time: ev.fire_time,
                seq: ev.seq,
                component: ev.target,
                kind: ev.payload.kind(),
            });
        }
        handler.handle(self, ev)?;
        Ok(true)
    }

    /// Dispatches until the queue drains or the next event lies beyond
    /// `limit`, then hands back the accumulated metrics.
    pub fn run<H: Handler<P>>(&mut self, handler: &mut H, limit: SimTime) -> Result<Metrics>
    where
        P: EventKind,
    {
        while self.step(handler, limit)? {}
        Ok(self.take_metrics())
    }

    /// Adapter that lets a sub-protocol schedule its own event type `E`.
    pub fn ctx<E, F>(&mut self, target: ComponentId, wrap: F) -> Ctx<'_, P, F>
    where
        F: Fn(E) -> P,
    {
        Ctx {
            engine: self,
            target,
            wrap,
        }
    }
}

/// Scheduling surface seen by protocol state machines.
pub trait Scheduler<E> {
    fn now(&self) -> SimTime;
    fn schedule(&mut self, delay: SimTime, event: E) -> EventId;
    fn cancel(&mut self, id: EventId) -> bool;
    fn metrics(&mut self) -> &mut Metrics;
}

/// A borrowed engine bound to one target component and a payload wrapper.
pub struct Ctx<'a, P, F> {
    engine: &'a mut Engine<P>,
    target: ComponentId,
    wrap: F,
}

impl<P, E, F> Scheduler<E> for Ctx<'_, P, F>
where
    F: Fn(E) -> P,
{
    fn now(&self) -> SimTime {
        self.engine.now()
    }

    fn schedule(&mut self, delay: SimTime, event: E) -> EventId {
        let payload = (self.wrap)(event);
        self.engine
            .schedule(delay, self.target, payload)
            .expect("target validated at construction")
    }

    fn cancel(&mut self, id: EventId) -> bool {
        self.engine.cancel(id)
    }

    fn metrics(&mut self) -> &mut Metrics {
        self.engine.metrics_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Tag(u32);
    impl EventKind for Tag {
        fn kind(&self) -> &'static str {
            "tag"
        }
    }

    #[derive(Default)]
    struct Log(Vec<(SimTime, u32)>);
    impl Handler<Tag> for Log {
        fn handle(&mut self, e: &mut Engine<Tag>, ev: Event<Tag>) -> Result<()> {
            self.0.push((e.now(), ev.payload.0));
            Ok(())
        }
    }

    #[test]
    fn fifo_at_equal_time() {
        let mut e = Engine::new();
        let x = e.register("x");
        e.schedule(SimTime::ZERO, x, Tag(1)).unwrap();
        e.schedule(SimTime::ZERO, x, Tag(2)).unwrap();
        let mut log = Log::default();
        e.run(&mut log, SimTime::MAX).unwrap();
        assert_eq!(log.0, vec![(SimTime::ZERO, 1), (SimTime::ZERO, 2)]);
    }

    #[test]
    fn delay_is_additive() {
        struct Once(Option<SimTime>);
        impl Handler<Tag> for Once {
            fn handle(&mut self, e: &mut Engine<Tag>, ev: Event<Tag>) -> Result<()> {
                if ev.payload.0 == 0 {
                    e.schedule(SimTime::ns(100), ev.target, Tag(1))?;
                } else {
                    self.0 = Some(e.now());
                }
                Ok(())
            }
        }
        let mut e = Engine::new();
        let x = e.register("x");
        e.schedule(SimTime::ns(50), x, Tag(0)).unwrap();
        let mut h = Once(None);
        e.run(&mut h, SimTime::MAX).unwrap();
        assert_eq!(h.0, Some(SimTime::ns(150)));
    }

    #[test]
    fn empty_queue_returns_immediately() {
        let mut e: Engine<Tag> = Engine::new();
        let mut log = Log::default();
        let m = e.run(&mut log, SimTime::MAX).unwrap();
        assert_eq!(e.now(), SimTime::ZERO);
        assert_eq!(m, Metrics::new());
    }

    #[test]
    fn ties_then_later() {
        let mut e = Engine::new();
        let x = e.register("x");
        e.schedule(SimTime::ns(5), x, Tag(1)).unwrap();
        e.schedule(SimTime::ns(9), x, Tag(3)).unwrap();
        e.schedule(SimTime::ns(5), x, Tag(2)).unwrap();
        let mut log = Log::default();
        e.run(&mut log, SimTime::MAX).unwrap();
        let order: Vec<u32> = log.0.iter().map(|p| p.1).collect();
        assert_eq!(order, vec![1, 2, 3]);
    }

    #[test]
    fn unknown_target_is_config_error() {
        let mut e: Engine<Tag> = Engine::new();
        let err = e
            .schedule(SimTime::ZERO, ComponentId(4), Tag(0))
            .unwrap_err();
        assert_eq!(err.category(), "config");
    }

    #[test]
    fn scheduling_into_the_past_is_fatal() {
        struct Bad;
        impl Handler<Tag> for Bad {
            fn handle(&mut self, e: &mut Engine<Tag>, ev: Event<Tag>) -> Result<()> {
                e.schedule_at(SimTime::ns(1), ev.target, Tag(9)).map(|_| ())
            }
        }
        let mut e = Engine::new();
        let x = e.register("x");
        e.schedule(SimTime::ns(10), x, Tag(0)).unwrap();
        let err = e.run(&mut Bad, SimTime::MAX).unwrap_err();
        assert!(matches!(err, SimError::Causality { .. }));
        assert_eq!(err.category(), "protocol");
    }

    #[test]
    fn cancelled_events_are_skipped() {
        let mut e = Engine::new();
        let x = e.register("x");
        let a = e.schedule(SimTime::ns(1), x, Tag(1)).unwrap();
        e.schedule(SimTime::ns(2), x, Tag(2)).unwrap();
        assert!(e.cancel(a));
        assert!(!e.cancel(a));
        assert_eq!(e.pending(), 1);
        let mut log = Log::default();
        e.run(&mut log, SimTime::MAX).unwrap();
        assert_eq!(log.0, vec![(SimTime::ns(2), 2)]);
    }

    #[test]
    fn limit_stops_dispatch() {
        let mut e = Engine::new();
        let x = e.register("x");
        e.schedule(SimTime::ns(5), x, Tag(1)).unwrap();
        e.schedule(SimTime::ns(50), x, Tag(2)).unwrap();
        let mut log = Log::default();
        e.run(&mut log, SimTime::ns(10)).unwrap();
        assert_eq!(log.0.len(), 1);
        assert_eq!(e.pending(), 1);
    }

    #[test]
    fn trace_format() {
        let mut e = Engine::new();
        let x = e.register("nic");
        e.enable_trace();
        e.schedule(SimTime::ns(3), x, Tag(1)).unwrap();
        e.run(&mut Log::default(), SimTime::MAX).unwrap();
        assert_eq!(e.trace_text(), "3\t0\tnic\ttag\n");
    }
}
