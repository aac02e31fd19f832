use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::time::SimTime;
use crate::error::{Result, SimError};

/// Default ceiling on delivered events (`engine.max_events`).
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000_000;

/// Identifies the component an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId(pub u32);

/// Unique per run; equal to the event's insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub target: ComponentId,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}
impl<P> Queued<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_at, self.0.sequence)
    }
}

/// Single-threaded discrete-event kernel.
///
/// Events are delivered in `(fire_at, sequence)` order; `sequence` is a
/// global insertion counter, so same-instant events are FIFO.
pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    delivered: u64,
    max_events: u64,
    finalized: bool,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    log: Option<Vec<(SimTime, u64)>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Self::with_max_events(DEFAULT_MAX_EVENTS)
    }

    pub fn with_max_events(max_events: u64) -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_seq: 0,
            delivered: 0,
            max_events,
            finalized: false,
            queue: BinaryHeap::new(),
            log: None,
        }
    }

    /// Keeps `(fire_at, sequence)` of every delivered event.
    pub fn record_delivery_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn delivery_log(&self) -> &[(SimTime, u64)] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn schedule(&mut self, target: ComponentId, payload: P, delay: SimTime) -> Result<EventId> {
        let at = self.now + delay;
        self.push(target, payload, at)
    }

    /// Schedules at an absolute time; times in the past are clamped to `now`.
    pub fn schedule_at(&mut self, target: ComponentId, payload: P, at: SimTime) -> Result<EventId> {
        let at = at.max(self.now);
        self.push(target, payload, at)
    }

    fn push(&mut self, target: ComponentId, payload: P, fire_at: SimTime) -> Result<EventId> {
        if self.finalized {
            return Err(SimError::Finalized);
        }
        let sequence = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued(Event { fire_at, sequence, target, payload })));
        Ok(EventId(sequence))
    }

    /// Pops the next event and advances the clock to it.
    pub fn next_event(&mut self) -> Result<Option<Event<P>>> {
        let Some(Reverse(Queued(ev))) = self.queue.pop() else {
            return Ok(None);
        };
        if self.delivered >= self.max_events {
            return Err(SimError::EventCeiling(self.max_events));
        }
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        self.delivered += 1;
        if let Some(log) = self.log.as_mut() {
            log.push((ev.fire_at, ev.sequence));
        }
        Ok(Some(ev))
    }

    /// Delivers events until the queue drains, then finalizes the kernel.
    /// Returns the time of the last delivered event (zero if none).
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> Result<SimTime>
    where
        F: FnMut(&mut Kernel<P>, Event<P>) -> Result<()>,
    {
        while let Some(ev) = self.next_event()? {
            handler(self, ev)?;
        }
        self.finalized = true;
        Ok(self.now)
    }
}
