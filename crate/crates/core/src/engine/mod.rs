//! Discrete-event kernel, clock domains, seeded streams and statistics.

mod kernel;
mod rng;
mod stats;
mod time;

pub use kernel::{ComponentId, Event, EventId, Kernel, DEFAULT_MAX_EVENTS};
pub use rng::{stream_rng, StreamRng};
pub use stats::{StatSeries, Summary};
pub use time::{ClockDomain, SimTime, PS_PER_NS};
