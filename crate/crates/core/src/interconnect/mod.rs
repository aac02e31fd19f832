//! Link, DMA and NUMA timing, plus the shipped hardware profiles.

mod dma;
mod latency;
mod link;
mod profile;
mod resource;

pub use dma::{DmaCompletion, DmaConfig, DmaEngine, DmaKind};
pub use latency::{LatencyConfig, NumaTable, Timing, NUMA_NODES};
pub use link::{Direction, Link};
pub(crate) use profile::merge_table;
pub use profile::{DeviceKind, Profile, PROFILE_NAMES};
pub use resource::{CreditPool, CreditToken, SlotCalendar};
