use serde::{Deserialize, Serialize};

use super::latency::Timing;
use super::resource::{CreditPool, CreditToken, SlotCalendar};
use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    D2H,
    H2D,
}

/// The CXL.cache link between the device and the host LLC.
///
/// Every message pays the directional adder. Messages carrying a data line
/// also take one device cycle on that direction's data lane, which caps the
/// link at one line per cycle. D2H requests hold a credit from departure
/// until their terminal response arrives.
#[derive(Debug, Clone)]
pub struct Link {
    d2h: SimTime,
    h2d: SimTime,
    line_time: SimTime,
    d2h_lane: SlotCalendar,
    h2d_lane: SlotCalendar,
    credits: CreditPool,
}

impl Link {
    pub fn new(t: &Timing) -> Self {
        Link {
            d2h: t.link_d2h,
            h2d: t.link_h2d,
            line_time: t.clock.cycles(1),
            d2h_lane: SlotCalendar::new(),
            h2d_lane: SlotCalendar::new(),
            credits: CreditPool::new(t.credits),
        }
    }

    /// Returns when a message leaving at `depart` arrives at the far end.
    pub fn traverse(&mut self, dir: Direction, depart: SimTime, carries_data: bool) -> SimTime {
        let (lane, adder) = match dir {
            Direction::D2H => (&mut self.d2h_lane, self.d2h),
            Direction::H2D => (&mut self.h2d_lane, self.h2d),
        };
        let sent = if carries_data { lane.reserve(depart, self.line_time) } else { depart };
        sent + adder
    }

    /// Earliest departure of a request that wants to leave at `at`.
    pub fn acquire_credit(&mut self, at: SimTime) -> CreditToken {
        self.credits.acquire(at)
    }

    pub fn release_credit(&mut self, token: CreditToken, at: SimTime) {
        self.credits.release(token, at);
    }

    pub fn credits(&self) -> &CreditPool {
        &self.credits
    }

    pub fn prune(&mut self, now: SimTime) {
        self.d2h_lane.prune(now);
        self.h2d_lane.prune(now);
    }
}
