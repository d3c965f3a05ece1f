//! Discrete-event core: virtual clock, event queue, seeded random streams
//! and the metrics sink shared by every other module.

mod engine;
mod metrics;
mod rng;
mod time;

pub use engine::{
    ComponentId, Ctx, Engine, Event, EventId, EventKind, Handler, Scheduler, TraceRecord,
};
pub use metrics::{LatencyStats, Metrics};
pub use rng::{Dist, RngStream};
pub use time::{serialization_ns, SimTime};
